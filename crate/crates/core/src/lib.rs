//! Finite-energy and finite-temperature expectation values from Loschmidt
//! amplitudes.
//!
//! A cosine filter `cos^M((H - E)/s)` approximates a Gaussian window around the
//! energy `E`; expanded as a binomial sum it becomes a weighted sum of
//! `e^{-iHt}` at evenly spaced times, so the filtered norm and filtered
//! observables are linear combinations of amplitudes `⟨ψ|e^{-iHt}|ψ⟩` that a
//! quantum device can supply. Sampling initial states with those weights gives
//! quantum-assisted Monte Carlo for microcanonical and canonical averages.
//!
//! Backends: [`ising`] (free-fermion transverse-field chain, exact at large N)
//! and [`dense`] (exact diagonalisation at small N). [`device`] wraps either as
//! an amplitude oracle with optional shot noise.

extern crate openblas_src;

pub mod dense;
pub mod device;
pub mod error;
pub mod estimators;
pub mod filter;
pub mod ising;
pub mod qamc;

pub use error::{Error, Result};
pub use filter::{FilterExpansion, FilterSpec, Grid};
