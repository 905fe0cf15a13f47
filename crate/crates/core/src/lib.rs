//! Distribution-system state estimation with a selective state-space
//! matrix generator driving a diagonal Kalman filter in a learned lifted
//! space.
//!
//! Pipeline: noisy measurement frames are lifted by an encoder, a stack
//! of selective-scan blocks emits per-step transition, control and
//! process-noise diagonals, a diagonal Kalman filter runs in the lifted
//! space and the final posterior is decoded back to bus voltages.

pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod koopman;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ssm;
pub mod train;

pub use config::RunConfig;
pub use error::{DsseError, Result};
pub use experiments::{run_experiment, ExperimentKind};
pub use model::{Dims, Model, ModelConfig, Variant};
