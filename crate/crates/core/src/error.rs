use thiserror::Error;

use crate::autodiff::AdError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inverted element: det F = {j:e} at {point:?}")]
    InvertedElement { j: f64, point: [f64; 3] },

    #[error("non-finite value in term `{term}` at point {index}")]
    NonFinite { term: &'static str, index: usize },

    #[error("{0}: point set is empty")]
    EmptySet(&'static str),

    #[error("observation set carries no strain payload")]
    MissingStrain,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ground truth for `{0}` has zero norm")]
    ZeroNorm(&'static str),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),

    #[error("training aborted at epoch {epoch} ({phase}): {source}")]
    Training {
        epoch: usize,
        phase: &'static str,
        source: Box<Error>,
    },

    #[error(transparent)]
    Ad(#[from] AdError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
