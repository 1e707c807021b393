//! Library side of the `e2e-qos` command-line tool: config loading, the
//! subcommands and the shared verification suite. The binary is a thin
//! argument parser on top.

pub mod commands;
pub mod config;
pub mod output;
pub mod setup;
pub mod suite;

pub use config::{ConfigError, Settings};
pub use setup::Prepared;
