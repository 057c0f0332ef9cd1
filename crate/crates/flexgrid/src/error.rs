//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the pipeline stages and file codecs.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input bytes: bad magic, truncated payload, out-of-range field.
    #[error("decode error: {0}")]
    Decode(String),

    /// Image or patch geometry violation (too small, window out of bounds).
    #[error("image error: {0}")]
    Image(String),

    /// Invalid configuration value or config-file syntax.
    #[error("config error: {0}")]
    Config(String),

    /// Mismatched matrix, graph, or label dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An iterative solver failed to converge within its iteration budget.
    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
