use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("box of side {side} centered at ({x}, {y}) is invalid for a {width}x{height} grid")]
    InvalidBox {
        x: i64,
        y: i64,
        side: i64,
        width: usize,
        height: usize,
    },

    #[error("keypoint at ({x:.2}, {y:.2}) lies outside the {width}x{height} image")]
    KeypointOutsideImage {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("descriptor length mismatch: {left} bits vs {right} bits")]
    BitLengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: unsupported format version, expected `{expected}`, found `{found}`")]
    Version {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
