use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("user mismatch: {0}")]
    UserMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty {0}")]
    Empty(String),
    #[error("both classes required: {0}")]
    SingleClass(String),
    #[error("missing timestamps: {0}")]
    MissingTimestamps(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
