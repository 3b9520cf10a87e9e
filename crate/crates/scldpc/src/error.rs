use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set or argument failed validation.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A serialized artifact could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// An I/O failure while reading or writing an artifact.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// An internal bound was exceeded; indicates a bug or a pathological
    /// input that passed validation.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
