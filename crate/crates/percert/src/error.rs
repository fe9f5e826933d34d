//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of operands do not line up (fatal input error).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument is outside its stated range or otherwise unusable.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A probability or other parameter left the mathematical domain
    /// of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dataset or run configuration is inconsistent (e.g. a class with
    /// no samples where every class is required).
    #[error("configuration error: {0}")]
    Config(String),

    /// A text input (CSV row, config file) could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A binary artifact (checkpoint) is corrupt or truncated.
    #[error("data error: {0}")]
    Data(String),

    /// A numeric result is undefined or vacuous for the given inputs
    /// (zero-matrix ratio, vacuous generalization bound, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Command-line usage error.
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Process exit code for this error when surfaced by the CLI:
    /// 1 = usage, 2 = data, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::DimensionMismatch(_)
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io(_) => 2,
            Error::Domain(_) | Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
