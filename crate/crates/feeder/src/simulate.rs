//! Quasi-static time series: one power-flow solve per step.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::case::FeederCase;
use crate::error::{FeederError, Result};
use crate::powerflow::{mismatch, sweep};
use crate::rng::{stream_rng, Stream};

pub const SUPPORTED_RESOLUTIONS: [u32; 4] = [1, 2, 5, 15];
pub const SWEEP_TOLERANCE: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 200;

const LOAD_AR: f64 = 0.9;
const LOAD_AR_SIGMA: f64 = 0.05;
const CLOUD_AR: f64 = 0.9;
const CLOUD_AR_SIGMA: f64 = 0.1;

/// Per-quantity blocks of one row, each `n_buses` wide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Voltage magnitude, p.u.
    Vm,
    /// Voltage angle, rad.
    Va,
    /// Net active injection, p.u. (generation positive).
    P,
    /// Net reactive injection, p.u.
    Q,
    /// Magnitude of the current in the line feeding the bus, p.u.; the
    /// root row holds the substation current.
    Current,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [Quantity::Vm, Quantity::Va, Quantity::P, Quantity::Q, Quantity::Current];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Vm => "vm",
            Quantity::Va => "va",
            Quantity::P => "p",
            Quantity::Q => "q",
            Quantity::Current => "i",
        }
    }
}

/// Raised-cosine clear-sky irradiance between 06:00 and 18:00, zero at night.
pub fn clear_sky(hour: f64) -> f64 {
    let h = hour.rem_euclid(24.0);
    if (6.0..=18.0).contains(&h) {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * (h - 6.0) / 12.0).cos())
    } else {
        0.0
    }
}

/// Ground-truth trajectory.
///
/// `values` is row-major `[step × 5·n_buses]` with quantity blocks in
/// [`Quantity::ALL`] order, so the state (`vm`, `va`) is the first
/// `2·n_buses` entries of every row.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSeries {
    pub n_buses: usize,
    pub resolution_minutes: u32,
    pub steps: usize,
    pub values: Vec<f64>,
    /// PV active power per bus, `[step × n_buses]`.
    pub pv: Vec<f64>,
}

impl GroundTruthSeries {
    pub fn width(&self) -> usize {
        5 * self.n_buses
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.values[t * w..(t + 1) * w]
    }

    pub fn quantity(&self, t: usize, q: Quantity) -> &[f64] {
        let n = self.n_buses;
        &self.row(t)[q.index() * n..(q.index() + 1) * n]
    }

    /// `[vm; va]` for all buses at step `t`.
    pub fn state(&self, t: usize) -> &[f64] {
        &self.row(t)[..2 * self.n_buses]
    }

    pub fn pv(&self, t: usize) -> &[f64] {
        &self.pv[t * self.n_buses..(t + 1) * self.n_buses]
    }

    /// Minutes since the start of day 0 at step `t`.
    pub fn minute(&self, t: usize) -> u64 {
        t as u64 * self.resolution_minutes as u64
    }

    pub fn steps_per_day(&self) -> usize {
        (1440 / self.resolution_minutes) as usize
    }

    pub fn voltage(&self, t: usize) -> Vec<Complex64> {
        let vm = self.quantity(t, Quantity::Vm);
        let va = self.quantity(t, Quantity::Va);
        vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    }

    pub fn injection(&self, t: usize) -> Vec<Complex64> {
        let p = self.quantity(t, Quantity::P);
        let q = self.quantity(t, Quantity::Q);
        p.iter().zip(q).map(|(&p, &q)| Complex64::new(p, q)).collect()
    }

    /// Total load-side active demand (negative of non-root net injection).
    pub fn total_net_load(&self, t: usize) -> f64 {
        -self.quantity(t, Quantity::P)[1..].iter().sum::<f64>()
    }

    /// Keep every `factor`-th step, dropping any trailing remainder.
    pub fn resample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(FeederError::InvalidArgument("resample factor must be ≥ 1".into()));
        }
        let steps = self.steps / factor;
        let w = self.width();
        let n = self.n_buses;
        let mut values = Vec::with_capacity(steps * w);
        let mut pv = Vec::with_capacity(steps * n);
        for k in 0..steps {
            values.extend_from_slice(self.row(k * factor));
            pv.extend_from_slice(self.pv(k * factor));
        }
        Ok(Self {
            n_buses: n,
            resolution_minutes: self.resolution_minutes * factor as u32,
            steps,
            values,
            pv,
        })
    }
}

/// Simulate `days` of operation at `resolution_minutes`.
///
/// Load at bus `b`: `base·shape_b(hour)·(1 + e_b)` with AR(1) `e_b`.
/// PV: `capacity·clear_sky(hour)·cloud` with one feeder-wide AR(1) cloud
/// process clipped to `[0, 1]`.
pub fn simulate(case: &FeederCase, days: usize, resolution_minutes: u32, seed: u64) -> Result<GroundTruthSeries> {
    simulate_with(case, days, resolution_minutes, seed, &mut |_, _| {})
}

/// Like [`simulate`], calling `inspect(step, injections)` with the
/// specified injections of every step (used for verification).
pub fn simulate_with(
    case: &FeederCase,
    days: usize,
    resolution_minutes: u32,
    seed: u64,
    inspect: &mut dyn FnMut(usize, &[Complex64]),
) -> Result<GroundTruthSeries> {
    if !SUPPORTED_RESOLUTIONS.contains(&resolution_minutes) {
        return Err(FeederError::InvalidArgument(format!(
            "resolution {resolution_minutes} min not in {SUPPORTED_RESOLUTIONS:?}"
        )));
    }
    case.validate()?;
    let n = case.n_buses;
    let steps = days * 1440 / resolution_minutes as usize;
    let mut rng = stream_rng(seed, Stream::Data, 1);
    let mut load_noise = vec![0.0; n];
    let mut cloud = 0.0;

    let mut values = Vec::with_capacity(steps * 5 * n);
    let mut pv_out = Vec::with_capacity(steps * n);
    let mut injection = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..steps {
        let hour = (t as f64 * resolution_minutes as f64 / 60.0).rem_euclid(24.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        cloud = CLOUD_AR * cloud + CLOUD_AR_SIGMA * z;
        let cloud_factor = (1.0 - f64::abs(cloud)).clamp(0.0, 1.0);
        let sun = clear_sky(hour);

        let mut pv_row = vec![0.0; n];
        for b in 1..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            load_noise[b] = LOAD_AR * load_noise[b] + LOAD_AR_SIGMA * z;
            let scale = case.load_shape[b].at(hour) * (1.0 + load_noise[b]).max(0.0);
            let pv = case.pv_capacity[b] * sun * cloud_factor;
            pv_row[b] = pv;
            injection[b] = Complex64::new(pv - case.base_load_p[b] * scale, -case.base_load_q[b] * scale);
        }
        inspect(t, &injection);

        let sol = sweep(case, &injection, SWEEP_TOLERANCE, MAX_SWEEPS).map_err(|f| {
            FeederError::NonConvergence { step: t, iterations: f.iterations, mismatch: f.mismatch }
        })?;
        debug_assert!(mismatch(case, &sol.voltage, &injection) < SWEEP_TOLERANCE);

        // Root injection is whatever the substation supplies.
        let root_s = sol.voltage[0] * sol.line_current[0].conj();
        let mut row = vec![0.0; 5 * n];
        for b in 0..n {
            let s = if b == 0 { root_s } else { injection[b] };
            row[b] = sol.voltage[b].norm();
            row[n + b] = sol.voltage[b].arg();
            row[2 * n + b] = s.re;
            row[3 * n + b] = s.im;
            row[4 * n + b] = sol.line_current[b].norm();
        }
        values.extend_from_slice(&row);
        pv_out.extend_from_slice(&pv_row);
    }
    Ok(GroundTruthSeries { n_buses: n, resolution_minutes, steps, values, pv: pv_out })
}
