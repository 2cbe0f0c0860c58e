use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An index fell outside a tensor axis.
    #[error("index {index} out of range on axis \"{axis}\" (length {len})")]
    Address {
        axis: &'static str,
        index: usize,
        len: usize,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Malformed or inconsistent file content.
    #[error("format error: {0}")]
    Format(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Not enough data to estimate a statistic.
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
