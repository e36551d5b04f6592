use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a precondition (shape mismatch, non-finite values, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration cannot be satisfied (infeasible mask budget, bad hyperparameter, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A file does not conform to the expected on-disk format.
    #[error("format error: {0}")]
    Format(String),

    /// The operation is valid but not supported (e.g. array rank above 3).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Training diverged (non-finite loss for too many consecutive steps).
    #[error("training diverged at step {step}; diagnostics at {dump:?}")]
    Divergence { step: usize, dump: PathBuf },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
