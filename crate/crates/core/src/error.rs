use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The filtered norm at the requested energy is too small (or too badly
    /// cancelled) to form a quotient.
    #[error("unresolvable energy E = {energy}: {reason}")]
    UnresolvableEnergy { energy: f64, reason: String },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("backend does not support {0}")]
    Capability(&'static str),

    /// A zero of a sampled |a(t)|^2 series whose order could not be determined.
    #[error("unresolved zero in t = [{t_start}, {t_end}] (fitted order {fitted_order:.3})")]
    UnresolvedZero {
        t_start: f64,
        t_end: f64,
        fitted_order: f64,
    },

    #[error("cold start: initial weight {weight:e} is not above the cutoff {cutoff:e}; pick a valid energy first")]
    ColdStart { weight: f64, cutoff: f64 },

    #[error("no eigenvalue in [{lo}, {hi}]; nearest eigenvalue is {nearest}")]
    EmptyWindow { lo: f64, hi: f64, nearest: f64 },

    #[error("LAPACK {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
