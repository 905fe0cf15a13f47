use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FeederError, Result};
use crate::rng::{stream_rng, Stream};

/// Parameters of one bus's double-peak daily load shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadShape {
    pub floor: f64,
    pub morning_hour: f64,
    pub morning_weight: f64,
    pub evening_hour: f64,
    pub evening_weight: f64,
}

impl LoadShape {
    /// Relative load at `hour` in `[0, 24)`; peaks near 1.
    pub fn at(&self, hour: f64) -> f64 {
        let bump = |center: f64, width: f64| {
            // Wrap the distance so the shape is periodic over the day.
            let mut d = (hour - center).rem_euclid(24.0);
            if d > 12.0 {
                d -= 24.0;
            }
            (-(d / width).powi(2)).exp()
        };
        self.floor + self.morning_weight * bump(self.morning_hour, 2.0) + self.evening_weight * bump(self.evening_hour, 2.5)
    }
}

/// A radial single-phase-equivalent feeder rooted at bus 0.
///
/// Line `b` (for `b ≥ 1`) connects `parent[b] < b` to `b`; index 0 of
/// every per-line vector is unused and zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederCase {
    pub n_buses: usize,
    pub parent: Vec<usize>,
    pub resistance: Vec<f64>,
    pub reactance: Vec<f64>,
    pub base_load_p: Vec<f64>,
    pub base_load_q: Vec<f64>,
    pub load_shape: Vec<LoadShape>,
    pub pv_capacity: Vec<f64>,
    pub pv_fraction: f64,
    pub seed: u64,
}

impl FeederCase {
    pub fn n_lines(&self) -> usize {
        self.n_buses - 1
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.n_buses];
        for b in 1..self.n_buses {
            ch[self.parent[b]].push(b);
        }
        ch
    }

    /// Tree validity: `n − 1` lines, each parent earlier than its child
    /// (so no cycles), and every bus reachable from the root.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_buses;
        let lens = [
            self.parent.len(),
            self.resistance.len(),
            self.reactance.len(),
            self.base_load_p.len(),
            self.base_load_q.len(),
            self.load_shape.len(),
            self.pv_capacity.len(),
        ];
        if n < 2 || lens.iter().any(|&l| l != n) {
            return Err(FeederError::InvalidArgument(format!("inconsistent case sizes for {n} buses")));
        }
        for b in 1..n {
            if self.parent[b] >= b {
                return Err(FeederError::InvalidArgument(format!("bus {b} has parent {}", self.parent[b])));
            }
            if !(self.resistance[b] > 0.0) {
                return Err(FeederError::InvalidArgument(format!("line {b} has non-positive resistance")));
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        let children = self.children();
        while let Some(b) = stack.pop() {
            seen[b] = true;
            stack.extend(&children[b]);
        }
        if seen.iter().any(|s| !s) {
            return Err(FeederError::InvalidArgument("feeder is not connected".into()));
        }
        Ok(())
    }
}

/// Random radial feeder. Bus `b ≥ 1` attaches to a uniformly chosen
/// earlier bus; `round(pv_fraction·(n − 1))` non-root buses receive PV.
pub fn generate_case(n_buses: usize, pv_fraction: f64, seed: u64) -> Result<FeederCase> {
    if n_buses < 2 {
        return Err(FeederError::InvalidArgument(format!("need at least 2 buses, got {n_buses}")));
    }
    if !(0.0..=1.0).contains(&pv_fraction) {
        return Err(FeederError::InvalidArgument(format!("pv_fraction {pv_fraction} outside [0, 1]")));
    }
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let n = n_buses;
    let mut parent = vec![0; n];
    let mut resistance = vec![0.0; n];
    let mut reactance = vec![0.0; n];
    let mut base_load_p = vec![0.0; n];
    let mut base_load_q = vec![0.0; n];
    let mut load_shape = Vec::with_capacity(n);
    load_shape.push(LoadShape { floor: 0.0, morning_hour: 0.0, morning_weight: 0.0, evening_hour: 0.0, evening_weight: 0.0 });
    for b in 1..n {
        parent[b] = rng.random_range(0..b);
        resistance[b] = rng.random_range(0.005..=0.03);
        reactance[b] = rng.random_range(0.01..=0.05);
        base_load_p[b] = rng.random_range(0.01..=0.05);
        let pf: f64 = rng.random_range(0.90..=0.98);
        base_load_q[b] = base_load_p[b] * pf.acos().tan();
        load_shape.push(LoadShape {
            floor: rng.random_range(0.25..=0.4),
            morning_hour: rng.random_range(6.5..=8.5),
            morning_weight: rng.random_range(0.25..=0.45),
            evening_hour: rng.random_range(17.5..=20.0),
            evening_weight: rng.random_range(0.45..=0.6),
        });
    }

    let n_pv = (pv_fraction * (n - 1) as f64).round() as usize;
    // Partial Fisher–Yates over the non-root buses.
    let mut candidates: Vec<usize> = (1..n).collect();
    let mut pv_capacity = vec![0.0; n];
    for i in 0..n_pv {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
        pv_capacity[candidates[i]] = rng.random_range(0.02..=0.08);
    }

    let case = FeederCase {
        n_buses: n,
        parent,
        resistance,
        reactance,
        base_load_p,
        base_load_q,
        load_shape,
        pv_capacity,
        pv_fraction,
        seed,
    };
    case.validate()?;
    Ok(case)
}
