use thiserror::Error;

/// Errors surfaced by parameter validation, estimators, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented range or invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An asynchronous simulation produced no successful trials, so no
    /// mean global-clock time (and hence no rate) can be formed.
    #[error("no successful trials out of {trials}; asynchronous rate is undefined")]
    NoSuccesses { trials: u64 },

    /// A persisted manifest failed structural validation.
    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
