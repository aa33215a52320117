//! Batch front-end for the `advtraj` toolkit: corpus generation, model
//! training, attack suites, mitigation studies and reports, all driven by
//! one JSON config.

pub mod chart;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{execute, Command, RunSummary};
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Completion};
