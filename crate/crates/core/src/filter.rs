//! Diagonal Kalman filter in the lifted space.
//!
//! The observation model is the identity: the lifted frame `x̄_t` is the
//! observation of the hidden state `h_t`, so the update needs only an
//! elementwise division. Each step first incorporates `x̄_t`, then
//! predicts the next prior with `h_{t+1} ~ N(A_t h_t + B_t x̄_t, Σ^Q_t)`.

use dsse_autodiff::{Tensor, Var};

use crate::engine::GeneratedMatrices;
use crate::error::{dimension, DsseError, Result};

/// Floor added to the learned measurement variance.
pub const MEASUREMENT_NOISE_FLOOR: f64 = 1e-6;
/// Initial belief: zero mean, unit variance.
pub const INITIAL_VARIANCE: f64 = 1.0;

/// Diagonal Gaussian over the lifted state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianBelief {
    pub fn initial(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![INITIAL_VARIANCE; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Realized measurement variance `softplus(raw) + 1e-6`.
pub fn measurement_noise(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|&r| dsse_autodiff::softplus(r) + MEASUREMENT_NOISE_FLOOR).collect()
}

fn check_dims(op: &'static str, dim: usize, parts: &[(&str, usize)]) -> Result<()> {
    for (name, len) in parts {
        if *len != dim {
            return Err(dimension(op, format!("{name} of length {dim}"), len));
        }
    }
    Ok(())
}

/// `μ⁻ = A·μ + B·x̄`, `P⁻ = A²·P + Σ^Q`, elementwise.
pub fn predict(belief: &GaussianBelief, a: &[f64], b: &[f64], q: &[f64], xbar: &[f64]) -> Result<GaussianBelief> {
    let d = belief.dim();
    check_dims("predict", d, &[("var", belief.var.len()), ("A", a.len()), ("B", b.len()), ("Q", q.len()), ("x̄", xbar.len())])?;
    let mean = (0..d).map(|i| a[i] * belief.mean[i] + b[i] * xbar[i]).collect();
    let var = (0..d).map(|i| a[i] * a[i] * belief.var[i] + q[i]).collect();
    Ok(GaussianBelief { mean, var })
}

/// Gain `K = P⁻/(P⁻ + R)`, `μ = μ⁻ + K(x̄ − μ⁻)`, `P = (1 − K)P⁻`.
pub fn update(prior: &GaussianBelief, xbar: &[f64], r: &[f64]) -> Result<GaussianBelief> {
    let d = prior.dim();
    check_dims("update", d, &[("var", prior.var.len()), ("x̄", xbar.len()), ("R", r.len())])?;
    let mut mean = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    for i in 0..d {
        let s = prior.var[i] + r[i];
        if !(s > 0.0) {
            return Err(DsseError::InvalidArgument(format!("update: innovation variance {s} at index {i}")));
        }
        let k = prior.var[i] / s;
        mean.push(prior.mean[i] + k * (xbar[i] - prior.mean[i]));
        // (1 − K)·P⁻ written as K·R to avoid cancellation when R ≪ P⁻.
        var.push(k * r[i]);
    }
    Ok(GaussianBelief { mean, var })
}

/// Per-step diagonal matrices for one sequence.
#[derive(Clone, Debug)]
pub struct StepMatrices {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
}

/// Priors and posteriors of a filtered sequence.
#[derive(Clone, Debug)]
pub struct FilterTrajectory {
    /// Belief before incorporating step t.
    pub priors: Vec<GaussianBelief>,
    pub posteriors: Vec<GaussianBelief>,
    /// Prediction for the step after the last.
    pub next_prior: GaussianBelief,
}

/// Filter one sequence. `observed[t] == false` skips the update at step
/// `t` (the prior passes through unchanged).
pub fn filter_sequence(
    xbar: &[Vec<f64>],
    matrices: &[StepMatrices],
    r: &[f64],
    initial: &GaussianBelief,
    observed: Option<&[bool]>,
) -> Result<FilterTrajectory> {
    if matrices.len() != xbar.len() || observed.is_some_and(|o| o.len() != xbar.len()) {
        return Err(dimension("filter_sequence", format!("{} steps of matrices and masks", xbar.len()), matrices.len()));
    }
    let mut prior = initial.clone();
    let mut priors = Vec::with_capacity(xbar.len());
    let mut posteriors = Vec::with_capacity(xbar.len());
    for (t, (x, m)) in xbar.iter().zip(matrices).enumerate() {
        let post = if observed.is_none_or(|o| o[t]) { update(&prior, x, r)? } else { prior.clone() };
        let next = predict(&post, &m.a, &m.b, &m.q, x)?;
        priors.push(std::mem::replace(&mut prior, next));
        posteriors.push(post);
    }
    Ok(FilterTrajectory { priors, posteriors, next_prior: prior })
}

/// Batched beliefs on the tape, `[B, d]` each.
#[derive(Clone, Copy, Debug)]
pub struct BeliefVar<'t> {
    pub mean: Var<'t>,
    pub var: Var<'t>,
}

/// Tape trajectory of [`filter_sequence_var`].
#[derive(Clone, Debug)]
pub struct FilterTrace<'t> {
    pub priors: Vec<BeliefVar<'t>>,
    pub posteriors: Vec<BeliefVar<'t>>,
}

impl<'t> FilterTrace<'t> {
    pub fn last_posterior(&self) -> BeliefVar<'t> {
        *self.posteriors.last().expect("non-empty trace")
    }
}

pub fn predict_var<'t>(
    belief: BeliefVar<'t>,
    a: Var<'t>,
    b: Var<'t>,
    q: Var<'t>,
    xbar: Var<'t>,
) -> Result<BeliefVar<'t>> {
    let mean = a.mul(belief.mean)?.add(b.mul(xbar)?)?;
    let var = a.square()?.mul(belief.var)?.add(q)?;
    Ok(BeliefVar { mean, var })
}

/// `r` has one row per batch entry (same shape as the belief).
pub fn update_var<'t>(prior: BeliefVar<'t>, xbar: Var<'t>, r: Var<'t>) -> Result<BeliefVar<'t>> {
    let s = prior.var.add(r)?;
    if s.value().data().iter().any(|&v| !(v > 0.0)) {
        return Err(DsseError::InvalidArgument("update: non-positive innovation variance".into()));
    }
    let k = prior.var.div(s)?;
    let mean = prior.mean.add(k.mul(xbar.sub(prior.mean)?)?)?;
    let var = k.mul(r)?;
    Ok(BeliefVar { mean, var })
}

/// Filter `B` sequences at once.
///
/// `xbar` and the matrices are time-major `[L·B, d]`; `r` is the realized
/// measurement variance `[d]`; `initial` is `[B, d]`. `observed[t] ==
/// false` skips the update at step `t` for the whole batch.
pub fn filter_sequence_var<'t>(
    xbar: Var<'t>,
    matrices: &GeneratedMatrices<'t>,
    r: Var<'t>,
    initial: BeliefVar<'t>,
    observed: Option<&[bool]>,
) -> Result<FilterTrace<'t>> {
    let shape = xbar.shape();
    let init_shape = initial.mean.shape();
    let (batch, d) = (init_shape[0], init_shape[1]);
    if shape.len() != 2 || shape[1] != d || batch == 0 || shape[0] % batch != 0 {
        return Err(dimension("filter_sequence", format!("x̄ of shape [L·{batch}, {d}]"), format!("{shape:?}")));
    }
    for m in [matrices.transition, matrices.control, matrices.process_noise] {
        if m.shape() != shape {
            return Err(dimension("filter_sequence", format!("matrices of shape {shape:?}"), format!("{:?}", m.shape())));
        }
    }
    let len = shape[0] / batch;
    if observed.is_some_and(|o| o.len() != len) {
        return Err(dimension("filter_sequence", format!("{len} observation flags"), observed.map_or(0, |o| o.len())));
    }
    let r_rows = r.broadcast(&[batch, d])?;
    let step = |v: Var<'t>, t: usize| v.slice(0, t * batch, batch);
    let mut prior = initial;
    let mut priors = Vec::with_capacity(len);
    let mut posteriors = Vec::with_capacity(len);
    for t in 0..len {
        let x = step(xbar, t)?;
        let post = if observed.is_none_or(|o| o[t]) { update_var(prior, x, r_rows)? } else { prior };
        priors.push(prior);
        posteriors.push(post);
        if t + 1 < len {
            prior = predict_var(
                post,
                step(matrices.transition, t)?,
                step(matrices.control, t)?,
                step(matrices.process_noise, t)?,
                x,
            )?;
        }
    }
    Ok(FilterTrace { priors, posteriors })
}

/// Plain-value initial belief for `batch` sequences.
pub fn initial_belief_var(tape: &dsse_autodiff::Tape, batch: usize, d: usize) -> BeliefVar<'_> {
    BeliefVar { mean: tape.constant(Tensor::zeros(&[batch, d])), var: tape.constant(Tensor::full(&[batch, d], INITIAL_VARIANCE)) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn belief(mean: f64, var: f64) -> GaussianBelief {
        GaussianBelief { mean: vec![mean], var: vec![var] }
    }

    #[test]
    fn predict_examples() {
        let p = predict(&belief(1.0, 0.5), &[0.9], &[0.0], &[0.1], &[3.0]).unwrap();
        assert!((p.mean[0] - 0.9).abs() < 1e-15);
        assert!((p.var[0] - 0.505).abs() < 1e-15);

        let near = predict(&belief(0.3, 0.7), &[1.0], &[0.0], &[1e-12], &[0.0]).unwrap();
        assert!((near.var[0] - 0.7).abs() < 1e-11);

        let zero = predict(&belief(0.0, 1.0), &[0.5], &[2.0], &[0.1], &[0.0]).unwrap();
        assert_eq!(zero.mean[0], 0.0);
        assert!(predict(&belief(0.0, 1.0), &[0.5, 0.5], &[2.0], &[0.1], &[0.0]).is_err());
    }

    #[test]
    fn update_examples() {
        let post = update(&belief(0.0, 1.0), &[2.0], &[1.0]).unwrap();
        assert_eq!((post.mean[0], post.var[0]), (1.0, 0.5));

        let ignore = update(&belief(0.4, 2.0), &[10.0], &[1e12]).unwrap();
        assert!((ignore.mean[0] - 0.4).abs() < 1e-10 && (ignore.var[0] - 2.0).abs() < 1e-10);

        let trust = update(&belief(0.4, 2.0), &[10.0], &[1e-12]).unwrap();
        assert!((trust.mean[0] - 10.0).abs() < 1e-10);
        assert!(trust.var[0] > 0.0);
    }

    #[test]
    fn single_step_sequence_is_update_then_predict() {
        let m = StepMatrices { a: vec![0.9], b: vec![0.2], q: vec![0.1] };
        let traj = filter_sequence(&[vec![2.0]], &[m.clone()], &[1.0], &belief(0.0, 1.0), None).unwrap();
        let post = update(&belief(0.0, 1.0), &[2.0], &[1.0]).unwrap();
        assert_eq!(traj.posteriors[0], post);
        assert_eq!(traj.next_prior, predict(&post, &m.a, &m.b, &m.q, &[2.0]).unwrap());
    }

    #[test]
    fn variance_converges_to_riccati_fixed_point() {
        let (a, q, r) = (0.8, 0.2, 0.5);
        let m = StepMatrices { a: vec![a], b: vec![0.0], q: vec![q] };
        let steps = 30;
        let traj = filter_sequence(&vec![vec![1.0]; steps], &vec![m; steps], &[r], &belief(0.0, 1.0), None).unwrap();
        let p: Vec<f64> = traj.posteriors.iter().map(|b| b.var[0]).collect();
        for t in 2..steps - 1 {
            assert!((p[t + 1] - p[t]).abs() <= (p[t] - p[t - 1]).abs() + 1e-15, "step {t}");
        }
        // Fixed point of P = r·(a²P + q)/(a²P + q + r).
        let prior = a * a * p[steps - 1] + q;
        assert!((p[steps - 1] - prior * r / (prior + r)).abs() < 1e-12);
    }

    #[test]
    fn unobserved_step_passes_prior_through() {
        let m = StepMatrices { a: vec![0.5], b: vec![1.0], q: vec![0.1] };
        let traj = filter_sequence(&[vec![1.0], vec![4.0]], &[m.clone(), m], &[0.3], &belief(0.0, 1.0), Some(&[true, false]))
            .unwrap();
        assert_eq!(traj.posteriors[1], traj.priors[1]);
    }
}
