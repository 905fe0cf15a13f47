//! Textbook dense Kalman filter with an identity observation model.
//!
//! Step order: the belief entering step `t` is updated with observation
//! `z_t`, then propagated with `(A_t, B_t, Q_t)` and control `z_t` to form
//! the prior for step `t + 1`. The first prior is the supplied initial
//! belief.

use nalgebra::{DMatrix, DVector};

pub struct DenseTrace {
    pub posterior_mean: Vec<Vec<f64>>,
    pub posterior_var: Vec<Vec<f64>>,
    /// Priors for steps 2..=L+1 (one-step predictions).
    pub prior_mean: Vec<Vec<f64>>,
    pub prior_var: Vec<Vec<f64>>,
}

/// Per-step diagonals are given as plain vectors; they are promoted to
/// full matrices and the update uses an explicit matrix inverse.
#[allow(clippy::too_many_arguments)]
pub fn run(
    observations: &[Vec<f64>],
    transition: &[Vec<f64>],
    control: &[Vec<f64>],
    process_noise: &[Vec<f64>],
    measurement_noise: &[f64],
    init_mean: &[f64],
    init_var: &[f64],
) -> DenseTrace {
    let d = init_mean.len();
    let h = DMatrix::<f64>::identity(d, d);
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(measurement_noise));
    let mut mean = DVector::from_column_slice(init_mean);
    let mut cov = DMatrix::from_diagonal(&DVector::from_column_slice(init_var));

    let mut out = DenseTrace {
        posterior_mean: vec![],
        posterior_var: vec![],
        prior_mean: vec![],
        prior_var: vec![],
    };
    for t in 0..observations.len() {
        let z = DVector::from_column_slice(&observations[t]);
        let s = &h * &cov * h.transpose() + &r;
        let s_inv = s.try_inverse().expect("innovation covariance is singular");
        let gain = &cov * h.transpose() * s_inv;
        mean = &mean + &gain * (&z - &h * &mean);
        cov = (DMatrix::identity(d, d) - &gain * &h) * &cov;
        out.posterior_mean.push(mean.iter().copied().collect());
        out.posterior_var.push(cov.diagonal().iter().copied().collect());

        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&transition[t]));
        let b = DMatrix::from_diagonal(&DVector::from_column_slice(&control[t]));
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&process_noise[t]));
        mean = &a * &mean + &b * &z;
        cov = &a * &cov * a.transpose() + q;
        out.prior_mean.push(mean.iter().copied().collect());
        out.prior_var.push(cov.diagonal().iter().copied().collect());
    }
    out
}
