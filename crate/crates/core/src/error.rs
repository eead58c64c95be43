use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library.
///
/// The variants are grouped so that callers (the CLI in particular) can map
/// them onto configuration, data, and runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no records in {0}")]
    NoRecords(String),

    #[error("level spec error: {0}")]
    LevelSpec(String),

    #[error("comparison undefined: {0}")]
    Undefined(String),

    #[error("invalid labeling: {0}")]
    InvalidLabeling(String),

    #[error("input too large: {0}")]
    TooLarge(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or missing input data, as opposed
    /// to configuration mistakes or failures during computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::NoRecords(_) | Error::Io { .. } | Error::Csv(_)
        )
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_) | Error::Config(_) | Error::LevelSpec(_)
        )
    }
}
