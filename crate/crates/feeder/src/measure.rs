//! Sensor placement and measurement noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FeederError, Result};
use crate::rng::{stream_rng, Stream};
use crate::simulate::{GroundTruthSeries, Quantity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserveConfig {
    /// Fraction of buses carrying sensors, in (0, 1].
    pub observability: f64,
    /// Per-bus relative voltage-magnitude σ is drawn uniformly from this range.
    pub sigma_v_range: (f64, f64),
    /// Relative σ of P, Q injections.
    pub sigma_pq: f64,
    /// Relative σ of line-current magnitudes.
    pub sigma_current: f64,
    /// Angle σ in radians is `sigma_v · angle_scale`.
    pub angle_scale: f64,
}

impl Default for ObserveConfig {
    fn default() -> Self {
        Self {
            observability: 0.10,
            sigma_v_range: (0.01, 0.03),
            sigma_pq: 0.05,
            sigma_current: 0.05,
            angle_scale: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Noisy measurements at a fixed set of observed buses.
///
/// `values` is row-major `[step × 5·n_observed]`, with quantity blocks in
/// [`Quantity::ALL`] order and buses in `observed` order within a block.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub n_buses: usize,
    pub resolution_minutes: u32,
    pub steps: usize,
    pub observed: Vec<usize>,
    /// Standard deviation of every channel, aligned with a row of `values`.
    /// Magnitude-type channels are relative; angle channels are absolute (rad).
    pub sigma: Vec<f64>,
    pub values: Vec<f64>,
}

/// One timestep of a [`MeasurementSet`].
#[derive(Clone, Copy, Debug)]
pub struct MeasurementFrame<'a> {
    pub observed: &'a [usize],
    pub values: &'a [f64],
    pub sigma: &'a [f64],
}

impl MeasurementFrame<'_> {
    pub fn quantity(&self, q: Quantity) -> &[f64] {
        let k = self.observed.len();
        &self.values[q.index() * k..(q.index() + 1) * k]
    }
}

impl MeasurementSet {
    pub fn width(&self) -> usize {
        5 * self.observed.len()
    }

    pub fn frame(&self, t: usize) -> MeasurementFrame<'_> {
        let w = self.width();
        MeasurementFrame { observed: &self.observed, values: &self.values[t * w..(t + 1) * w], sigma: &self.sigma }
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_buses];
        for &b in &self.observed {
            m[b] = true;
        }
        m
    }

    pub fn channel_names(&self) -> Vec<String> {
        Quantity::ALL
            .iter()
            .flat_map(|q| self.observed.iter().map(move |b| format!("{}[{b}]", q.label())))
            .collect()
    }

    pub fn resample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(FeederError::InvalidArgument("resample factor must be ≥ 1".into()));
        }
        let steps = self.steps / factor;
        let w = self.width();
        let mut values = Vec::with_capacity(steps * w);
        for k in 0..steps {
            let t = k * factor;
            values.extend_from_slice(&self.values[t * w..(t + 1) * w]);
        }
        Ok(Self {
            resolution_minutes: self.resolution_minutes * factor as u32,
            steps,
            values,
            ..self.clone()
        })
    }
}

/// Default noise model at the given observability.
pub fn observe(series: &GroundTruthSeries, observability: f64, noise_seed: u64) -> Result<MeasurementSet> {
    observe_with(series, &ObserveConfig { observability, ..ObserveConfig::default() }, noise_seed)
}

pub fn observe_with(series: &GroundTruthSeries, config: &ObserveConfig, noise_seed: u64) -> Result<MeasurementSet> {
    let n = series.n_buses;
    if !(config.observability > 0.0 && config.observability <= 1.0) {
        return Err(FeederError::InvalidArgument(format!(
            "observability {} outside (0, 1]",
            config.observability
        )));
    }
    let k = (config.observability * n as f64).round() as usize;
    if k < 1 {
        return Err(FeederError::InvalidArgument(format!(
            "observability {} leaves no observed bus among {n}",
            config.observability
        )));
    }
    let mut rng = stream_rng(noise_seed, Stream::Noise, 0);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        order.swap(i, j);
    }
    let mut observed = order[..k].to_vec();
    observed.sort_unstable();

    let (lo, hi) = config.sigma_v_range;
    let sigma_v: Vec<f64> = observed
        .iter()
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect();
    let mut sigma = Vec::with_capacity(5 * k);
    sigma.extend(&sigma_v);
    sigma.extend(sigma_v.iter().map(|s| s * config.angle_scale));
    sigma.extend(std::iter::repeat(config.sigma_pq).take(2 * k));
    sigma.extend(std::iter::repeat(config.sigma_current).take(k));

    let mut values = Vec::with_capacity(series.steps * 5 * k);
    for t in 0..series.steps {
        for q in Quantity::ALL {
            let truth = series.quantity(t, q);
            for (j, &b) in observed.iter().enumerate() {
                let s = sigma[q.index() * k + j];
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = match q {
                    Quantity::Va => truth[b] + s * z,
                    _ => truth[b] * (1.0 + s * z),
                };
                values.push(v);
            }
        }
    }
    Ok(MeasurementSet {
        n_buses: n,
        resolution_minutes: series.resolution_minutes,
        steps: series.steps,
        observed,
        sigma,
        values,
    })
}
