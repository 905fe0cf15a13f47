//! Reference implementations that the test suites compare against.
//!
//! Nothing here shares code with the production crates: the dense Kalman
//! filter inverts full matrices, the power-flow solver is a polar
//! Newton–Raphson on the bus admittance matrix, and gradients come from
//! central differences.

pub mod finite_diff;
pub mod kalman;
pub mod power_flow;
