use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at element {0}")]
    NonFinite(usize),

    #[error("negative disparity {value} at element {index}")]
    NegativeDisparity { index: usize, value: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("no valid pixels")]
    EmptyValidSet,

    #[error("no edge pixels within band")]
    EmptyBand,

    #[error("architecture spec error: {0}")]
    Arch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: byte {offset}: {message}")]
    PfmParse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    PngFormat { path: PathBuf, message: String },

    #[error("{path}: line {line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: line {line} duplicates the (pred, gt) pair first seen on line {first_line}")]
    ManifestDuplicate {
        path: PathBuf,
        first_line: usize,
        line: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
