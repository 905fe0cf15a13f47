use dsse_autodiff::AdError;
use dsse_feeder::FeederError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DsseError {
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{op}: expected {expected}, got {actual}")]
    Dimension { op: &'static str, expected: String, actual: String },
    #[error("non-finite training loss at step {step}; config: {config}")]
    NonFiniteLoss { step: usize, config: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DsseError>;

pub(crate) fn dimension(op: &'static str, expected: impl ToString, actual: impl ToString) -> DsseError {
    DsseError::Dimension { op, expected: expected.to_string(), actual: actual.to_string() }
}
