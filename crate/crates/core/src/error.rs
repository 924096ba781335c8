use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("unsupported exponent: {0}")]
    UnsupportedExponent(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("conflict graph has {vertices} vertices, exact solver cutoff is {cutoff}")]
    TooLarge { vertices: usize, cutoff: usize },

    #[error("outside validity region: {0}")]
    OutOfValidity(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("duplicate config digest {0}")]
    DuplicateDigest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn invalid_range(msg: impl Into<String>) -> Error {
    Error::InvalidRange(msg.into())
}
