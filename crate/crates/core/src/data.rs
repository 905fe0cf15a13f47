//! Normalization and sliding windows over a feeder dataset.
//!
//! A model frame is the measurement row of the observed buses
//! (`vm, va, p, q, i` for each, z-scored with training statistics). The
//! sensor placement is fixed for the whole series, so which buses the
//! columns belong to never changes. The target is `[vm; va]` for every bus,
//! z-scored the same way.

use dsse_autodiff::Tensor;
use dsse_feeder::{Dataset, Quantity};
use serde::{Deserialize, Serialize};

use crate::error::{DsseError, Result};

/// Standard deviations below this are treated as constant channels.
const CONSTANT_CHANNEL: f64 = 1e-9;

/// Per-channel affine normalization fitted on training steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
}

fn moments(rows: impl Iterator<Item = Vec<f64>>, width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut count = 0usize;
    let mut mean = vec![0.0; width];
    let mut m2 = vec![0.0; width];
    for row in rows {
        count += 1;
        for (i, &x) in row.iter().enumerate() {
            let delta = x - mean[i];
            mean[i] += delta / count as f64;
            m2[i] += delta * (x - mean[i]);
        }
    }
    let std = m2.iter().map(|&s| (s / count.max(1) as f64).sqrt()).collect();
    (mean, std)
}

impl Normalizer {
    /// Fit on steps `[0, end)`.
    pub fn fit(dataset: &Dataset, end: usize) -> Result<Self> {
        if end == 0 || end > dataset.truth.steps {
            return Err(DsseError::InvalidArgument(format!("normalizer: fit range 0..{end} is empty or too long")));
        }
        let m = &dataset.measurements;
        let (input_mean, input_std) = moments((0..end).map(|t| m.frame(t).values.to_vec()), m.width());
        let (state_mean, state_std) =
            moments((0..end).map(|t| dataset.truth.state(t).to_vec()), 2 * dataset.truth.n_buses);
        Ok(Self { input_mean, input_std, state_mean, state_std })
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        affine(x, &self.input_mean, &self.input_std)
    }

    pub fn normalize_state(&self, x: &[f64]) -> Vec<f64> {
        affine(x, &self.state_mean, &self.state_std)
    }

    pub fn denormalize_state(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.state_mean)
            .zip(&self.state_std)
            .map(|((z, m), &s)| if s < CONSTANT_CHANNEL { *m } else { z * s + m })
            .collect()
    }
}

/// Constant channels map to zero and back to their mean.
fn affine(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), &s)| if s < CONSTANT_CHANNEL { 0.0 } else { (x - m) / s })
        .collect()
}

/// Window end indices (inclusive last step) for each split.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSplits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Windows lying entirely inside each region: training `[0, v)`,
/// validation `[v, train_end)` with `v` holding back `validation_fraction`
/// of the training steps, and test `[train_end, steps)`.
pub fn window_splits(train_end: usize, steps: usize, window: usize, validation_fraction: f64) -> Result<WindowSplits> {
    if window == 0 {
        return Err(DsseError::InvalidArgument("window length must be ≥ 1".into()));
    }
    let held = ((validation_fraction * train_end as f64).round() as usize).min(train_end);
    let v = train_end - held;
    let ends = |start: usize, stop: usize| -> Vec<usize> {
        if stop >= start + window {
            (start + window - 1..stop).collect()
        } else {
            Vec::new()
        }
    };
    let splits = WindowSplits { train: ends(0, v), validation: ends(v, train_end), test: ends(train_end, steps) };
    if splits.train.is_empty() || splits.test.is_empty() {
        return Err(DsseError::InvalidArgument(format!(
            "window {window} does not fit: {} training and {} test windows",
            splits.train.len(),
            splits.test.len()
        )));
    }
    Ok(splits)
}

/// At most `max` entries of `ends`, evenly strided; all of them when
/// `max == 0` or there are fewer.
pub fn subsample(ends: &[usize], max: usize) -> Vec<usize> {
    if max == 0 || ends.len() <= max {
        return ends.to_vec();
    }
    (0..max).map(|i| ends[i * ends.len() / max]).collect()
}

/// Normalized frames and targets of a whole series.
#[derive(Clone, Debug)]
pub struct SeriesData {
    pub normalizer: Normalizer,
    pub n_buses: usize,
    pub observed: Vec<usize>,
    pub steps: usize,
    pub d_in: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    /// Physical `[vm; va]` per step.
    truth: Vec<f64>,
    /// Raw (noisy, physical) measurement rows.
    measured: Vec<f64>,
}

/// A batch of windows in time-major layout.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    /// `[L·B, d_in]`.
    pub frames: Tensor,
    /// Normalized `[vm; va]` for every step, `[L·B, 2n]`.
    pub targets: Tensor,
    pub batch: usize,
    pub window: usize,
    pub ends: Vec<usize>,
}

impl WindowBatch {
    pub fn rows(&self) -> usize {
        self.batch * self.window
    }
}

impl SeriesData {
    pub fn new(dataset: &Dataset, normalizer: &Normalizer) -> Result<Self> {
        let m = &dataset.measurements;
        let n = dataset.truth.n_buses;
        if normalizer.input_mean.len() != m.width() || normalizer.state_mean.len() != 2 * n {
            return Err(DsseError::InvalidArgument(format!(
                "normalizer fitted for {} inputs / {} states, dataset has {} / {}",
                normalizer.input_mean.len(),
                normalizer.state_mean.len(),
                m.width(),
                2 * n
            )));
        }
        let steps = dataset.truth.steps;
        let mut inputs = Vec::with_capacity(steps * m.width());
        let mut targets = Vec::with_capacity(steps * 2 * n);
        let mut truth = Vec::with_capacity(steps * 2 * n);
        for t in 0..steps {
            inputs.extend(normalizer.normalize_input(m.frame(t).values));
            let state = dataset.truth.state(t);
            targets.extend(normalizer.normalize_state(state));
            truth.extend_from_slice(state);
        }
        Ok(Self {
            normalizer: normalizer.clone(),
            n_buses: n,
            observed: m.observed.clone(),
            steps,
            d_in: m.width(),
            inputs,
            targets,
            truth,
            measured: m.values.clone(),
        })
    }

    pub fn d_state(&self) -> usize {
        2 * self.n_buses
    }

    /// Physical `[vm; va]` at step `t`.
    pub fn truth(&self, t: usize) -> &[f64] {
        &self.truth[t * 2 * self.n_buses..(t + 1) * 2 * self.n_buses]
    }

    /// Raw measurement row at step `t` (quantity blocks over observed buses).
    pub fn measured(&self, t: usize) -> &[f64] {
        &self.measured[t * self.d_in..(t + 1) * self.d_in]
    }

    pub fn batch(&self, ends: &[usize], window: usize) -> Result<WindowBatch> {
        let b = ends.len();
        if b == 0 || window == 0 {
            return Err(DsseError::InvalidArgument("empty batch".into()));
        }
        if let Some(&bad) = ends.iter().find(|&&e| e + 1 < window || e >= self.steps) {
            return Err(DsseError::InvalidArgument(format!("window ending at {bad} does not fit in {} steps", self.steps)));
        }
        let (din, ds) = (self.d_in, self.d_state());
        let mut frames = Vec::with_capacity(window * b * din);
        let mut targets = Vec::with_capacity(window * b * ds);
        for t in 0..window {
            for &e in ends {
                let s = e + 1 - window + t;
                frames.extend_from_slice(&self.inputs[s * din..(s + 1) * din]);
                targets.extend_from_slice(&self.targets[s * ds..(s + 1) * ds]);
            }
        }
        Ok(WindowBatch {
            frames: Tensor::new(vec![window * b, din], frames)?,
            targets: Tensor::new(vec![window * b, ds], targets)?,
            batch: b,
            window,
            ends: ends.to_vec(),
        })
    }

    /// Persistence: the reading at the window's last step for observed
    /// buses, the training mean elsewhere.
    pub fn persistence(&self, end: usize) -> Vec<f64> {
        let n = self.n_buses;
        let k = self.observed.len();
        let mut out = self.normalizer.state_mean.clone();
        let row = self.measured(end);
        for (j, &b) in self.observed.iter().enumerate() {
            out[b] = row[Quantity::Vm.index() * k + j];
            out[n + b] = row[Quantity::Va.index() * k + j];
        }
        out
    }

    /// Per-channel training mean of the state.
    pub fn mean_state(&self) -> Vec<f64> {
        self.normalizer.state_mean.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsse_feeder::DatasetConfig;

    fn dataset() -> Dataset {
        Dataset::generate(&DatasetConfig { n_buses: 10, days: 3, ..DatasetConfig::default() }, 4).unwrap()
    }

    #[test]
    fn normalized_training_inputs_are_standardized() {
        let ds = dataset();
        let norm = Normalizer::fit(&ds, ds.split.train_end).unwrap();
        let data = SeriesData::new(&ds, &norm).unwrap();
        let w = data.d_in;
        for c in 0..w {
            let col: Vec<f64> = (0..ds.split.train_end).map(|t| data.inputs[t * w + c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
        // The slack bus state is constant: normalized to exactly zero.
        assert!((0..ds.truth.steps).all(|t| data.targets[t * 20] == 0.0 && data.targets[t * 20 + 10] == 0.0));
        let back = norm.denormalize_state(&norm.normalize_state(ds.truth.state(5)));
        for (a, b) in back.iter().zip(ds.truth.state(5)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn splits_do_not_overlap() {
        let s = window_splits(100, 150, 8, 0.1).unwrap();
        assert_eq!(s.train.first(), Some(&7));
        assert_eq!(s.train.last(), Some(&89));
        assert_eq!(s.validation, (97..100).collect::<Vec<_>>());
        assert_eq!(s.test.first(), Some(&107));
        assert_eq!(s.test.last(), Some(&149));
        assert!(window_splits(10, 12, 8, 0.1).is_err());
    }

    #[test]
    fn batch_layout_is_time_major() {
        let ds = dataset();
        let norm = Normalizer::fit(&ds, ds.split.train_end).unwrap();
        let data = SeriesData::new(&ds, &norm).unwrap();
        let b = data.batch(&[10, 40], 3).unwrap();
        assert_eq!(b.frames.shape(), &[6, data.d_in]);
        // Row t·B + j holds step ends[j] − 2 + t.
        assert_eq!(b.frames.row(3), &data.inputs[39 * data.d_in..40 * data.d_in]);
        assert_eq!(b.targets.row(4), &data.targets[10 * 20..11 * 20]);
        assert!(data.batch(&[1], 3).is_err());
    }

    #[test]
    fn persistence_uses_readings_at_observed_buses() {
        let ds = dataset();
        let norm = Normalizer::fit(&ds, ds.split.train_end).unwrap();
        let data = SeriesData::new(&ds, &norm).unwrap();
        let p = data.persistence(50);
        let b = ds.measurements.observed[0];
        assert_eq!(p[b], ds.measurements.frame(50).quantity(Quantity::Vm)[0]);
        let unobserved = (0..10).find(|x| !ds.measurements.observed.contains(x)).unwrap();
        assert_eq!(p[unobserved], norm.state_mean[unobserved]);
    }
}
