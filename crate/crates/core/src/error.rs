use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing parameter: {0}")]
    Lookup(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("model mismatch: container expects weights {expected}, got {actual}")]
    WrongModel { expected: String, actual: String },
    #[error("resource bound exceeded: {0}")]
    ResourceBound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn corrupt<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::CorruptStream(msg.into()))
}
