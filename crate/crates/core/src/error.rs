use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration errors:\n{}", .0.join("\n"))]
    ConfigLines(Vec<String>),

    #[error("unsupported layer for receptive field: {0}")]
    UnsupportedLayer(String),

    #[error("tape is empty")]
    EmptyTape,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch for entry '{0}'")]
    Checksum(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("replica divergence: worker {worker} checksum {found:08x} != {expected:08x}")]
    ReplicaDivergence { worker: usize, found: u32, expected: u32 },

    #[error("image of {pixels} pixels exceeds the monolithic limit of {limit}")]
    TooLarge { pixels: usize, limit: usize },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by NaN/Inf or divergence rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::ReplicaDivergence { .. })
    }
}
