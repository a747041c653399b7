//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisemeError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed image file: {0}")]
    MalformedImage(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("sample value {value} exceeds declared depth {depth}")]
    SampleOutOfDepth { value: u32, depth: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coincident gravity centers; sibling models cannot be blended")]
    CoincidentCenters,

    #[error("empty structure: {0}")]
    Empty(String),

    #[error("unresolved code: {0}")]
    UnresolvedCode(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VisemeError>;
