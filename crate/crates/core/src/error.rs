use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated header")]
    TruncatedHeader,

    #[error("truncated row at frame {0}")]
    TruncatedRow(u64),

    #[error("stream ended after {got} of {declared} declared frames")]
    MissingFrames { declared: u64, got: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame index {got} out of order, expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("non-finite component at frame {frame}, position {position}")]
    NonFinite { frame: u64, position: usize },

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("unsatisfiable centroid separation {separation} after {attempts} rejections")]
    UnsatisfiableSeparation { separation: f64, attempts: usize },

    #[error("malformed record: {0}")]
    Malformed(String),
}
