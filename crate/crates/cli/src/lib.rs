//! Configuration handling and subcommands of the `parksim` binary.

pub mod commands;
pub mod config;

pub use commands::CliError;
pub use config::Config;
