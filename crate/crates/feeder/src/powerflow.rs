//! Backward/forward sweep for radial feeders.
//!
//! Bus 0 is the slack at `1∠0`. Loads are constant power. Each iteration
//! computes injection currents from the present voltages, accumulates
//! line currents from the leaves toward the root (children always have a
//! larger index than their parent), then walks root-to-leaf applying the
//! series voltage drops.

use num_complex::Complex64;

use crate::case::FeederCase;

#[derive(Clone, Debug)]
pub struct SweepSolution {
    pub voltage: Vec<Complex64>,
    /// Current flowing from `parent[b]` into bus `b`; entry 0 holds the
    /// total substation current.
    pub line_current: Vec<Complex64>,
    pub iterations: usize,
    pub mismatch: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepFailure {
    pub iterations: usize,
    pub mismatch: f64,
}

fn impedance(case: &FeederCase, b: usize) -> Complex64 {
    Complex64::new(case.resistance[b], case.reactance[b])
}

/// Largest bus power-balance error in p.u.: net power injected by the
/// network at every non-slack bus, from line currents implied by the
/// voltages, compared with the specified injection.
pub fn mismatch(case: &FeederCase, voltage: &[Complex64], injection: &[Complex64]) -> f64 {
    let n = case.n_buses;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for b in 1..n {
        let p = case.parent[b];
        let j = (voltage[p] - voltage[b]) / impedance(case, b);
        out[p] += j;
        out[b] -= j;
    }
    (1..n)
        .map(|b| (voltage[b] * out[b].conj() - injection[b]).norm())
        .fold(0.0, f64::max)
}

/// Solve for bus voltages given net complex injections (generation
/// positive). Stops when the mismatch drops below `tol`.
pub fn sweep(
    case: &FeederCase,
    injection: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<SweepSolution, SweepFailure> {
    let n = case.n_buses;
    let one = Complex64::new(1.0, 0.0);
    let mut voltage = vec![one; n];
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    let mut last = f64::INFINITY;
    for iter in 1..=max_iter {
        current.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for b in (1..n).rev() {
            current[b] -= (injection[b] / voltage[b]).conj();
            let p = case.parent[b];
            let jb = current[b];
            current[p] += jb;
        }
        for b in 1..n {
            voltage[b] = voltage[case.parent[b]] - impedance(case, b) * current[b];
        }
        last = mismatch(case, &voltage, injection);
        if !last.is_finite() {
            break;
        }
        if last < tol {
            return Ok(SweepSolution { voltage, line_current: current, iterations: iter, mismatch: last });
        }
    }
    Err(SweepFailure { iterations: max_iter, mismatch: last })
}
