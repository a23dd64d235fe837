//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up (wrong rank, channel mismatch, empty output, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// A precondition on values was violated (non-stochastic target, bad weight, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Required mutable state is missing or inconsistent (e.g. batchnorm running
    /// stats requested in inference mode before any training step).
    #[error("state error: {0}")]
    State(String),

    /// A numeric computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A text input (config file, manifest, CSV grid, WAV header) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Distinct failure modes when loading a checkpoint container.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes, not an AMFM checkpoint")]
    BadMagic,

    #[error("unsupported checkpoint format version {0}")]
    Version(u32),

    #[error("checkpoint truncated: {0}")]
    Truncated(String),

    #[error("shape table mismatch: {0}")]
    ShapeTable(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
