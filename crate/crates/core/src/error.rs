//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("case validation failed: {0}")]
    Validation(String),

    #[error("outage of line {line} disconnects the network")]
    Islanding { line: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigenvalue iteration did not converge for row {0}")]
    EigNoConvergence(usize),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged: {0}")]
    TrainDiverged(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numeric breakdown in LP solve: {0}")]
    LpNumeric(String),

    #[error("power flow did not converge after {0} iterations")]
    PfNoConvergence(usize),

    #[error("invalid operating point: {0}")]
    InvalidPoint(String),

    #[error("unknown contingency: {0}")]
    UnknownContingency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
