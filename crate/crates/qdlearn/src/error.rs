use std::path::PathBuf;

use thiserror::Error;

use crate::harness::ValidationReport;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter combination that can never describe a runnable experiment
    /// (bad dimensions, out-of-range builder arguments, unknown preset, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Pre-run validation rejected the experiment. The report lists every
    /// check with its pass/fail/waived status.
    #[error("validation failed: {}", .0.one_line())]
    Validation(ValidationReport),

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file whose contents do not match the expected record layout.
    #[error("malformed data in {}: {detail}", path.display())]
    Malformed { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
