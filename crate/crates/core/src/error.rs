use thiserror::Error;

/// Errors raised by the flow library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZlpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("singular parameters: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("rank-deficient Jacobian on the tangent space (det = {0:e})")]
    RankDeficient(f64),

    #[error("fit diverged: {0}")]
    Divergence(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ZlpError>;

impl From<std::io::Error> for ZlpError {
    fn from(e: std::io::Error) -> Self {
        ZlpError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ZlpError {
    fn from(e: serde_json::Error) -> Self {
        ZlpError::Spec(e.to_string())
    }
}
