//! Library half of the pipeline driver. The binary parses flags and prints;
//! everything it runs lives here so integration tests can call commands
//! in-process and inspect typed results.

pub mod artifacts;
pub mod commands;
pub mod config;

/// Bad flag or config values. The binary maps this to exit code 2;
/// everything else is a runtime failure and exits 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);
