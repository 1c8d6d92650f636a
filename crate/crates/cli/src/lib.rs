//! File formats, metrics and command implementations behind the `legmhe`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod log;
pub mod metrics;

pub use error::CliError;
