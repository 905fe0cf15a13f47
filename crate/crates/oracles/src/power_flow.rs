//! Polar Newton–Raphson power flow on the full bus admittance matrix.
//!
//! Bus 0 is the slack at `1∠0`. Every other bus is PQ with the given net
//! complex injection (generation positive). Line `b` joins `parent[b]` and
//! `b` with series impedance `r[b] + j x[b]`; entry 0 of each slice is unused.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

#[derive(Debug)]
pub struct NewtonResult {
    pub voltage: Vec<C64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

pub fn admittance(parent: &[usize], r: &[f64], x: &[f64]) -> DMatrix<C64> {
    let n = parent.len();
    let mut y = DMatrix::<C64>::zeros(n, n);
    for b in 1..n {
        let p = parent[b];
        let yl = C64::new(1.0, 0.0) / C64::new(r[b], x[b]);
        y[(b, b)] += yl;
        y[(p, p)] += yl;
        y[(b, p)] -= yl;
        y[(p, b)] -= yl;
    }
    y
}

/// Complex power injected at every bus for the given voltages.
pub fn injections(y: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let vv = DVector::from_column_slice(v);
    let i = y * &vv;
    v.iter().zip(i.iter()).map(|(vk, ik)| vk * ik.conj()).collect()
}

pub fn solve(
    parent: &[usize],
    r: &[f64],
    x: &[f64],
    injection: &[C64],
    tol: f64,
    max_iter: usize,
) -> NewtonResult {
    let n = parent.len();
    let y = admittance(parent, r, x);
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    let m = n - 1;

    let mut iterations = 0;
    loop {
        let v: Vec<C64> = (0..n).map(|k| C64::from_polar(vm[k], va[k])).collect();
        let s = injections(&y, &v);
        let mut f = DVector::<f64>::zeros(2 * m);
        for k in 1..n {
            let d = s[k] - injection[k];
            f[k - 1] = d.re;
            f[m + k - 1] = d.im;
        }
        let max_mismatch = f.amax();
        if max_mismatch < tol || iterations >= max_iter {
            return NewtonResult { voltage: v, iterations, max_mismatch };
        }

        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let vvec = DVector::from_column_slice(&v);
        let ibus = &y * &vvec;
        let vnorm: Vec<C64> = v.iter().map(|z| z / z.norm()).collect();
        let mut ds_da = DMatrix::<C64>::zeros(n, n);
        let mut ds_dm = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let diag_i = if i == k { ibus[i] } else { C64::new(0.0, 0.0) };
                ds_da[(i, k)] = C64::new(0.0, 1.0) * v[i] * (diag_i - y[(i, k)] * v[k]).conj();
                let mut term = v[i] * (y[(i, k)] * vnorm[k]).conj();
                if i == k {
                    term += ibus[i].conj() * vnorm[i];
                }
                ds_dm[(i, k)] = term;
            }
        }
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for i in 1..n {
            for k in 1..n {
                jac[(i - 1, k - 1)] = ds_da[(i, k)].re;
                jac[(i - 1, m + k - 1)] = ds_dm[(i, k)].re;
                jac[(m + i - 1, k - 1)] = ds_da[(i, k)].im;
                jac[(m + i - 1, m + k - 1)] = ds_dm[(i, k)].im;
            }
        }
        let dx = jac.lu().solve(&(-f)).expect("singular power-flow Jacobian");
        for k in 1..n {
            va[k] += dx[k - 1];
            vm[k] += dx[m + k - 1];
        }
        iterations += 1;
    }
}
