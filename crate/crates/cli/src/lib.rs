//! Experiment runner around `dipg-core`: config parsing, artifact I/O, and
//! the train / dipg / eval / compare / batch subcommands.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

mod error;

pub use error::{CliError, CliResult};
