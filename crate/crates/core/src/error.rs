//! Error types shared across the toolkit.

/// Errors produced by the library.
///
/// The CLI maps these onto exit codes: usage and input problems exit with 2,
/// numerical failures (divergence) with 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Array shapes do not line up for an operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API contract (e.g. non-scalar loss, empty batch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is invalid or missing.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data is unusable (too short, mismatched lengths, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A text file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A structured file has the wrong layout.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a non-finite loss.
    #[error("numerical failure at epoch {epoch} (learning rate {learning_rate}): {message}")]
    Numerical {
        epoch: usize,
        learning_rate: f64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
