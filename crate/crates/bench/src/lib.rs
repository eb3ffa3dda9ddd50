//! Experiment runner for constrained GMRF timing and regression studies.

pub mod config;
pub mod divfree;
pub mod error;
pub mod hard_timing;
pub mod optim;
pub mod output;
pub mod results;
pub mod runner;

pub use config::{Experiment, ExperimentConfig};
pub use error::{BenchError, Result};
pub use runner::RunOutput;
