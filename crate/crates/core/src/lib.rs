//! Adaptive-stepsize Langevin sampling with time-rescaled splitting
//! integrators and reweighted averages.

pub mod adaptivity;
pub mod averaging;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod integrators;
pub mod potentials;
pub mod rng;
pub mod run;
pub mod sampler;
pub mod suites;

pub use error::{Error, Result};
