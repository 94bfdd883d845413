//! Run configuration, training loop, evaluation and command implementations
//! behind the `survrelu` binary.

pub mod commands;
pub mod config;
mod error;
pub mod evaluate;
pub mod model;
pub mod train;

pub use error::{CliError, CliResult};
