use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("power flow did not converge at step {step} after {iterations} sweeps (mismatch {mismatch:e} p.u.)")]
    NonConvergence { step: usize, iterations: usize, mismatch: f64 },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FeederError>;
