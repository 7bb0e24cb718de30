use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension d = {0} (need d >= 3)")]
    UnsupportedDimension(usize),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn geometry<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidGeometry(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
