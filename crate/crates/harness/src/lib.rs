//! Experiment harness: configuration, multi-seed runs, CSV output, rate
//! fits and plots.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plots;
pub mod rates;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
