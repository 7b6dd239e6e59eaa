//! Configuration, orchestration and output for the `liouville-lab` command.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ExperimentConfig, Mode, SCHEMA};
pub use error::CliError;
