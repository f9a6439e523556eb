use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain too small: no lattice points satisfy the containment condition at N={n}")]
    DomainTooSmall { n: u32 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense solve cap exceeded: |V| = {n} > {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
