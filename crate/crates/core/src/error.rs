use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
    #[error("SingularMatrix: {0}")]
    SingularMatrix(String),
    #[error("DegenerateVector: {0}")]
    DegenerateVector(String),
    #[error("FormatError: {0}")]
    FormatError(String),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("IndexError: {0}")]
    IndexError(String),
    #[error("RankError: {0}")]
    RankError(String),
    #[error("ProtocolError: {0}")]
    ProtocolError(String),
    #[error("SpecError: {0}")]
    SpecError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
