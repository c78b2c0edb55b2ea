//! Configuration, initial-data parsing and subcommands behind the `paneitz` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod initial;

pub use commands::run_command;
pub use config::{parse_config, Command, ExperimentConfig};
pub use error::CliError;
