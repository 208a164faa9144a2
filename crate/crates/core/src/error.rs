use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty surface: mask has no boundary voxels at the given iso level")]
    EmptySurface,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit class: 1 for validation errors (bad inputs, bad config),
    /// 2 for runtime/numeric failures. Exit code 3 (acceptance-threshold
    /// failure) is decided by the pipeline, not by an `Error`.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsupportedFormat(_)
            | Error::InvalidVolume(_)
            | Error::GeometryMismatch(_)
            | Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::EmptySurface => 1,
            Error::Io { .. } | Error::Degenerate(_) | Error::Numeric(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
