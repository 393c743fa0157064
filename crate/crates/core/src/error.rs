use thiserror::Error;

/// Errors produced by graph construction, solvers and the benchmark pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {0} is isolated (zero degree) after construction")]
    IsolatedNode(usize),

    #[error("disconnected: {0}")]
    Disconnected(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error(
        "system matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:.3e}); \
         try a smaller gamma"
    )]
    NotPositiveDefinite { smallest_eigenvalue: f64 },

    #[error("kernel approximation broke down: {0}")]
    ApproximationBreakdown(String),

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
