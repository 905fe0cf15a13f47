//! Error metrics in physical units.
//!
//! `RMSE` is the square root of the mean squared error, so `RMSE ≥ MAE`
//! holds on every report.

use serde::{Deserialize, Serialize};

use crate::error::{dimension, DsseError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
}

impl ErrorStats {
    pub fn from_residuals(residuals: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut n, mut abs, mut sq) = (0usize, 0.0, 0.0);
        for r in residuals {
            n += 1;
            abs += r.abs();
            sq += r * r;
        }
        if n == 0 {
            return Err(DsseError::InvalidArgument("metrics: no residuals".into()));
        }
        Ok(Self { mae: abs / n as f64, rmse: (sq / n as f64).sqrt() })
    }
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(ErrorStats::from_residuals(y.iter().zip(yhat).map(|(a, b)| a - b))?.mae)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(ErrorStats::from_residuals(y.iter().zip(yhat).map(|(a, b)| a - b))?.rmse)
}

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(dimension("metrics", format!("{} predictions", y.len()), yhat.len()));
    }
    Ok(())
}

/// Absolute-error distribution of one quantity at one bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusErrors {
    pub bus: usize,
    /// `"vm"` or `"va"`.
    pub quantity: String,
    pub mae: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub overall: ErrorStats,
    /// Voltage magnitude, p.u.
    pub magnitude: ErrorStats,
    /// Voltage angle, rad.
    pub angle: ErrorStats,
    pub per_bus: Vec<BusErrors>,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl MetricsReport {
    /// `truth` and `pred` hold one `[vm; va]` row of `2·n_buses` per sample.
    pub fn compute(truth: &[Vec<f64>], pred: &[Vec<f64>], n_buses: usize) -> Result<Self> {
        if truth.is_empty() {
            return Err(DsseError::InvalidArgument("metrics: empty test set".into()));
        }
        if truth.len() != pred.len() {
            return Err(dimension("metrics", format!("{} predictions", truth.len()), pred.len()));
        }
        let n = n_buses;
        for row in truth.iter().chain(pred) {
            if row.len() != 2 * n {
                return Err(dimension("metrics", format!("rows of {}", 2 * n), row.len()));
            }
        }
        let residual = |c: usize| truth.iter().zip(pred).map(move |(t, p)| t[c] - p[c]);
        let overall = ErrorStats::from_residuals((0..2 * n).flat_map(residual))?;
        let magnitude = ErrorStats::from_residuals((0..n).flat_map(residual))?;
        let angle = ErrorStats::from_residuals((n..2 * n).flat_map(residual))?;
        let mut per_bus = Vec::with_capacity(2 * n);
        for (offset, quantity) in [(0, "vm"), (n, "va")] {
            for bus in 0..n {
                let mut errs: Vec<f64> = residual(offset + bus).map(f64::abs).collect();
                errs.sort_by(f64::total_cmp);
                per_bus.push(BusErrors {
                    bus,
                    quantity: quantity.to_string(),
                    mae: errs.iter().sum::<f64>() / errs.len() as f64,
                    q1: quantile(&errs, 0.25),
                    median: quantile(&errs, 0.5),
                    q3: quantile(&errs, 0.75),
                    max: *errs.last().expect("non-empty"),
                });
            }
        }
        Ok(Self { samples: truth.len(), overall, magnitude, angle, per_bus })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!((rmse(&[1.0, 2.0], &[1.0, 3.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[1.0, 2.0], &[1.0, 3.0]).unwrap() - 0.707_106_8).abs() < 1e-7);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn report_splits_channels() {
        let truth = vec![vec![1.0, 1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]];
        let pred = vec![vec![1.0, 0.9, 0.0, 0.2], vec![1.0, 1.1, 0.0, -0.2]];
        let r = MetricsReport::compute(&truth, &pred, 2).unwrap();
        assert!((r.magnitude.mae - 0.05).abs() < 1e-12);
        assert!((r.angle.mae - 0.1).abs() < 1e-12);
        assert!((r.angle.rmse - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(r.overall.rmse >= r.overall.mae);
        assert_eq!(r.per_bus.len(), 4);
        assert!((r.per_bus[1].median - 0.1).abs() < 1e-12);
        assert!(MetricsReport::compute(&[], &[], 2).is_err());
    }
}
