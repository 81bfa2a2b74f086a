use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("resource limit exceeded: {what} requires {requested} terms (limit {limit})")]
    ResourceLimit {
        what: &'static str,
        requested: f64,
        limit: f64,
    },

    #[error("precision {eps:e} is out of reach within the cap of {cap}")]
    InfeasiblePrecision { eps: f64, cap: usize },

    #[error("contract violated: {message} (measured {measured})")]
    Contract { message: String, measured: f64 },

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::ModelValidation(msg.into())
    }
}
