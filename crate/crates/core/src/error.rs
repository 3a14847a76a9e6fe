use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("grid sampling too coarse: {0}")]
    Sampling(String),

    #[error("non-finite value at node {node}: {detail}")]
    Numeric { node: usize, detail: String },

    #[error("accuracy target missed: {0}")]
    Accuracy(String),

    #[error("solver did not converge: {0}")]
    Convergence(String),

    #[error("structural inconsistency: {0}")]
    Structural(String),

    #[error("reference accuracy insufficient: {0}")]
    Reference(String),

    #[error("symmetry precondition failed: {0}")]
    Symmetry(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
