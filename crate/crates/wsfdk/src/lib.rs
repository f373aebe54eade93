//! File formats and the command-line driver for `wsfdk-core`.

pub mod cli;
pub mod container;
pub mod error;
pub mod formats;

pub use error::CliError;
