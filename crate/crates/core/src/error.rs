use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inconsistent trial state: {0}")]
    InvalidState(String),
    #[error("trial has already terminated")]
    Terminated,
}

pub type Result<T> = std::result::Result<T, Error>;
