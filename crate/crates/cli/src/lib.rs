//! Batch pipeline behind the `fieldrecon` binary.
//!
//! Each stage reads the files written by the previous one from the output
//! directory, so stages can be rerun or resumed independently:
//!
//! ```text
//! ingest -> tune -> evaluate -> compare
//!             \--> bench
//! ```

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

pub use config::{ExperimentConfig, Manifest, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments; nothing was run.
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{path}: {message}")]
    MissingArtifact { path: PathBuf, message: String },

    #[error("{0}")]
    Refused(String),

    #[error(transparent)]
    Core(#[from] fieldrecon::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
