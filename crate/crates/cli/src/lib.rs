//! Experiment harness: configuration files, sweeps over algorithms,
//! accuracies and seeds, trace CSVs and their summaries.

pub mod cell;
pub mod config;
pub mod error;
pub mod experiment;
pub mod setup;
pub mod tracefile;

pub use config::ExperimentConfig;
pub use error::HarnessError;
