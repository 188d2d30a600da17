use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TrustError>;

#[derive(Debug, Error)]
pub enum TrustError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("target column `{0}` not found in header")]
    TargetAbsent(String),
    #[error("target column `{column}` has a missing value at row {row}")]
    TargetMissing { column: String, row: usize },
    #[error("target column `{column}` is not numeric (row {row}: `{token}`)")]
    NonNumericTarget { column: String, row: usize, token: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("dataset has no target column")]
    NoTarget,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate linear system: {0}")]
    Degenerate(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model file error: {0}")]
    ModelFormat(String),
    #[error("llm request failed: {0}")]
    Llm(String),
}

impl TrustError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrustError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TrustError::InvalidArgument(msg.into())
    }
}
