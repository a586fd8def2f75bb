use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate cat state: d={d}, k={k} at alpha = 0")]
    Degenerate { d: usize, k: usize },
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
