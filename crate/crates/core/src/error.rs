use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Training or sweep configuration that cannot be realized.
    #[error("configuration error: {0}")]
    Config(String),
    /// Factorization or solve failure.
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Config-file syntax or value error with location.
    #[error("{origin}:{line}: {field}: {message}")]
    Parse {
        origin: String,
        line: usize,
        field: String,
        message: String,
    },
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
