use thiserror::Error;

#[derive(Debug, Error)]
pub enum KblError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("did not converge: {0}")]
    NotConverged(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KblError>;
