use thiserror::Error;

use crate::models::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("cannot parse value {value:?} at row {row}, column {column}")]
    BadCell { row: usize, column: String, value: String },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("degenerate feature {0}: fewer than two distinct values")]
    DegenerateFeature(String),

    #[error("interval count must be at least 1, got {0}")]
    InvalidIntervalCount(usize),

    #[error("feature index {index} out of range for {d} predictors")]
    FeatureOutOfRange { index: usize, d: usize },

    #[error("invalid feature set: {0}")]
    InvalidFeatureSet(String),

    #[error("model evaluation failed at row {row}: {message}")]
    Predict { row: usize, message: String },

    #[error("model returned {got} predictions for {expected} rows")]
    PredictionCount { expected: usize, got: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("request {id} timed out after {seconds}s")]
    Timeout { id: u64, seconds: f64 },

    #[error("model process exited ({status}); stderr: {stderr}")]
    Subprocess { status: String, stderr: String },

    #[error("http transport error for request {id}: {message}")]
    Http { id: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot render: {0}")]
    Render(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
