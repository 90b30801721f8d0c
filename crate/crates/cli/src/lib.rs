//! Scenario ingestion, verification runs and deterministic JSON reports for
//! `everett-core`.

pub mod config;
pub mod json;
pub mod matrix_io;
pub mod report;
pub mod runner;

use thiserror::Error;

pub use config::{ConfigError, FieldDiagnostic, ScenarioConfig};
pub use report::VerificationReport;

/// Exit status for a report that ran but did not pass.
pub const EXIT_FAILED: i32 = 1;
/// Exit status for usage, configuration and I/O problems.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] everett_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{0}")]
    Usage(String),
}
