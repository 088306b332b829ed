use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image header: {0}")]
    CorruptHeader(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed: {0}")]
    Encode(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} at pixel {pixel} is out of range for {phases} phases")]
    LabelOutOfRange {
        pixel: usize,
        label: usize,
        phases: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid of {pixels} pixels exceeds the direct-summation limit of {limit}")]
    GridTooLarge { pixels: usize, limit: usize },

    #[error("{0}")]
    DecayViolation(Box<crate::solver::DecayViolation>),

    #[error("unknown {what} `{value}`")]
    UnknownKind { what: &'static str, value: String },
}
