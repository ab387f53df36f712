use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NpssError>;

#[derive(Debug, Error)]
pub enum NpssError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot sample {requested} rows from an empty {pool} pool")]
    EmptySource { pool: &'static str, requested: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of bounds for axis of length {len}")]
    Index { index: usize, len: usize },

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("test set exhausted after {completed} of {requested} top-k iterations")]
    EmptyTest { completed: usize, requested: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl NpssError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NpssError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            NpssError::Io { .. } => "IoError",
            NpssError::Parse { .. } => "ParseError",
            NpssError::Validation(_) => "ValidationError",
            NpssError::Shape(_) => "ShapeError",
            NpssError::EmptySource { .. } => "EmptySourceError",
            NpssError::Domain(_) => "DomainError",
            NpssError::Index { .. } => "IndexError",
            NpssError::LabelMismatch(_) => "LabelMismatchError",
            NpssError::EmptyTest { .. } => "EmptyTestError",
            NpssError::InvalidArgument(_) => "InvalidArgument",
            NpssError::Json(_) => "JsonError",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, NpssError::Io { .. })
    }
}
