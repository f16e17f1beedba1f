//! Command-line front end: one command per estimator or sampler, figure
//! presets, CSV tables with a JSON sidecar, and replay from the sidecar.

pub mod app;
pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

pub use config::RunConfig;
pub use output::{Report, Status, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] finite_energy::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 for unresolvable energies, 3 for chains that
    /// cannot start or converge, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use finite_energy::Error as E;
        match self {
            CliError::Core(E::UnresolvableEnergy { .. }) => 2,
            CliError::Core(E::ColdStart { .. }) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
