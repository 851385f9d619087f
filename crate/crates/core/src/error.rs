use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("feature width mismatch: model expects {expected} columns, got {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("need at least two classes, found {0}")]
    SingleClass(usize),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("unknown algorithm `{tag}`; valid tags: {valid}")]
    UnknownAlgorithm { tag: String, valid: String },

    #[error("ensemble member `{member}` failed to fit: {source}")]
    MemberFit {
        member: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported model document version {0}")]
    ModelVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
