//! Diagonal state-space primitives.
//!
//! Continuous dynamics `x' = a·x + b·u` per state with `a < 0`, discretized
//! by zero-order hold:
//!
//! ```text
//! Ā = exp(Δa)        B̄ = (exp(Δa) − 1)/(Δa) · Δ·b
//! h[k] = Ā h[k−1] + B̄ u[k]        y[k] = C h[k] + d·u[k]
//! ```
//!
//! The plain functions here operate on [`Tensor`]s without a tape and are
//! the reference path; [`selective_scan_var`] is the batched, differentiable
//! scan used by the sequence blocks.

use dsse_autodiff::{softplus, AdError, CustomOp, Tensor, Var};

use crate::error::{dimension, DsseError, Result};

/// Distance kept between realized continuous eigenvalues and zero.
pub const DYNAMICS_MARGIN: f64 = 1e-4;

/// Below this `|x|`, `(eˣ − 1)/x` is evaluated from its Taylor series.
pub const PHI_SERIES_THRESHOLD: f64 = 1e-5;

/// Continuous diagonal entry from an unconstrained parameter:
/// `−softplus(a_raw) − 1e-4`, always strictly negative.
pub fn realize_dynamics(a_raw: f64) -> f64 {
    -softplus(a_raw) - DYNAMICS_MARGIN
}

/// Tape version of [`realize_dynamics`], elementwise.
pub fn realize_dynamics_var(a_raw: Var<'_>) -> Result<Var<'_>> {
    Ok(a_raw.softplus()?.neg()?.add_scalar(-DYNAMICS_MARGIN)?)
}

/// `(eˣ − 1)/x`, continuous through `x = 0`.
pub fn phi(x: f64) -> f64 {
    if x.abs() < PHI_SERIES_THRESHOLD {
        1.0 + x * (1.0 / 2.0 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        x.exp_m1() / x
    }
}

/// Derivative of [`phi`].
pub fn phi_prime(x: f64) -> f64 {
    // The closed form loses about 1/x² digits; the series is exact to
    // double precision below 1e-2.
    if x.abs() < 1e-2 {
        0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x * (1.0 / 30.0 + x / 144.0)))
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

struct Phi;

impl CustomOp for Phi {
    fn name(&self) -> &'static str {
        "phi"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        vec![Some(grad.zip_map(inputs[0], |g, x| g * phi_prime(x)))]
    }
}

/// Elementwise [`phi`] on the tape.
pub fn phi_var(x: Var<'_>) -> Result<Var<'_>> {
    let out = x.value().map(phi);
    Ok(x.tape().custom(&[x], out, Box::new(Phi))?)
}

/// Discrete diagonal pair from zero-order hold.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePair {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

/// Zero-order-hold discretization of diagonal `a` and input weights `b`
/// with step `delta`.
pub fn zoh_discretize(a: &[f64], b: &[f64], delta: f64) -> Result<DiscretePair> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(DsseError::InvalidArgument(format!("zoh_discretize: step Δ = {delta} must be positive")));
    }
    if a.len() != b.len() {
        return Err(dimension("zoh_discretize", format!("b of length {}", a.len()), b.len()));
    }
    let a_bar = a.iter().map(|&ai| (delta * ai).exp()).collect();
    let b_bar = a.iter().zip(b).map(|(&ai, &bi)| phi(delta * ai) * delta * bi).collect();
    Ok(DiscretePair { a_bar, b_bar })
}

/// Tape version of [`zoh_discretize`]; `a`, `b` and `delta` have equal
/// shapes and `delta` must be positive.
pub fn zoh_var<'t>(a: Var<'t>, b: Var<'t>, delta: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    if delta.value().data().iter().any(|&d| d <= 0.0) {
        return Err(DsseError::InvalidArgument("zoh: step Δ must be positive".into()));
    }
    let x = delta.mul(a)?;
    let a_bar = x.exp()?;
    let b_bar = phi_var(x)?.mul(delta)?.mul(b)?;
    Ok((a_bar, b_bar))
}

/// Output of [`selective_scan`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScanOutput {
    /// `[L, D]`.
    pub y: Tensor,
    /// Hidden state after the last step, `[D, N]`.
    pub final_state: Tensor,
}

/// Sequential recurrence with explicit per-step discrete matrices.
///
/// Shapes: `u` `[L, D]`; `a_bar`, `b_bar`, `c` `[L, D, N]`; `d_skip` `[D]`;
/// `x0` `[D, N]`.
pub fn selective_scan(
    u: &Tensor,
    a_bar: &Tensor,
    b_bar: &Tensor,
    c: &Tensor,
    d_skip: &Tensor,
    x0: &Tensor,
) -> Result<ScanOutput> {
    if u.rank() != 2 {
        return Err(dimension("selective_scan", "u of rank 2", format!("{:?}", u.shape())));
    }
    let (l, d) = (u.shape()[0], u.shape()[1]);
    if x0.rank() != 2 || x0.shape()[0] != d {
        return Err(dimension("selective_scan", format!("x0 of shape [{d}, N]"), format!("{:?}", x0.shape())));
    }
    let n = x0.shape()[1];
    for (name, t) in [("a_bar", a_bar), ("b_bar", b_bar), ("c", c)] {
        if t.shape() != [l, d, n] {
            return Err(dimension("selective_scan", format!("{name} of shape [{l}, {d}, {n}]"), format!("{:?}", t.shape())));
        }
    }
    if d_skip.shape() != [d] {
        return Err(dimension("selective_scan", format!("d_skip of shape [{d}]"), format!("{:?}", d_skip.shape())));
    }
    let mut h = x0.data().to_vec();
    let mut y = vec![0.0; l * d];
    for k in 0..l {
        for ch in 0..d {
            let uk = u.data()[k * d + ch];
            let mut acc = d_skip.data()[ch] * uk;
            for s in 0..n {
                let i = (k * d + ch) * n + s;
                let hs = &mut h[ch * n + s];
                *hs = a_bar.data()[i] * *hs + b_bar.data()[i] * uk;
                acc += c.data()[i] * *hs;
            }
            y[k * d + ch] = acc;
        }
    }
    Ok(ScanOutput { y: Tensor::new(vec![l, d], y)?, final_state: Tensor::new(vec![d, n], h)? })
}

/// Convolution taps `C·Āʲ·B̄` per channel, `[L, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub taps: Tensor,
}

/// Materialize `L` kernel taps of a time-invariant diagonal system; all
/// arguments are `[D, N]`.
pub fn kernel_materialize(a_bar: &Tensor, b_bar: &Tensor, c: &Tensor, len: usize) -> Result<ConvKernel> {
    if len < 1 {
        return Err(DsseError::InvalidArgument("kernel_materialize: length must be ≥ 1".into()));
    }
    if a_bar.rank() != 2 || b_bar.shape() != a_bar.shape() || c.shape() != a_bar.shape() {
        return Err(dimension(
            "kernel_materialize",
            format!("three [D, N] tensors, got a_bar {:?}", a_bar.shape()),
            format!("b_bar {:?}, c {:?}", b_bar.shape(), c.shape()),
        ));
    }
    let (d, n) = (a_bar.shape()[0], a_bar.shape()[1]);
    let mut power: Vec<f64> = c.data().iter().zip(b_bar.data()).map(|(c, b)| c * b).collect();
    let mut taps = Vec::with_capacity(len * d);
    for _ in 0..len {
        for ch in 0..d {
            taps.push(power[ch * n..(ch + 1) * n].iter().sum());
        }
        for (p, a) in power.iter_mut().zip(a_bar.data()) {
            *p *= a;
        }
    }
    Ok(ConvKernel { taps: Tensor::new(vec![len, d], taps)? })
}

/// Causal convolution `y[k] = Σ_{j≤k} K[j]·u[k−j]` per channel; taps past
/// the kernel length are zero.
pub fn conv_apply(kernel: &ConvKernel, u: &Tensor) -> Result<Tensor> {
    let taps = &kernel.taps;
    if u.rank() != 2 || taps.shape()[1] != u.shape()[1] {
        return Err(dimension("conv_apply", format!("u of shape [L, {}]", taps.shape()[1]), format!("{:?}", u.shape())));
    }
    let (l, d) = (u.shape()[0], u.shape()[1]);
    let klen = taps.shape()[0];
    if klen > l {
        return Err(DsseError::InvalidArgument(format!("conv_apply: kernel length {klen} exceeds sequence length {l}")));
    }
    let mut y = vec![0.0; l * d];
    for k in 0..l {
        for j in 0..=k.min(klen - 1) {
            for ch in 0..d {
                y[k * d + ch] += taps.data()[j * d + ch] * u.data()[(k - j) * d + ch];
            }
        }
    }
    Ok(Tensor::new(vec![l, d], y)?)
}

/// Saved state of a batched selective scan for the backward pass.
struct SelectiveScan {
    len: usize,
    batch: usize,
    channels: usize,
    states: usize,
    /// Hidden state after every step, `[L·B, D, N]`.
    hidden: Vec<f64>,
}

impl SelectiveScan {
    fn forward(
        len: usize,
        batch: usize,
        u: &Tensor,
        delta: &Tensor,
        a: &Tensor,
        bm: &Tensor,
        cm: &Tensor,
        d_skip: &Tensor,
    ) -> (Self, Tensor) {
        let (d, n) = (a.shape()[0], a.shape()[1]);
        let mut hidden = vec![0.0; len * batch * d * n];
        let mut y = vec![0.0; len * batch * d];
        for t in 0..len {
            for b in 0..batch {
                let r = t * batch + b;
                for ch in 0..d {
                    let ut = u.data()[r * d + ch];
                    let dt = delta.data()[r * d + ch];
                    let mut acc = d_skip.data()[ch] * ut;
                    for s in 0..n {
                        let x = dt * a.data()[ch * n + s];
                        let b_bar = dt * phi(x) * bm.data()[r * n + s];
                        let prev = if t == 0 { 0.0 } else { hidden[((r - batch) * d + ch) * n + s] };
                        let h = x.exp() * prev + b_bar * ut;
                        hidden[(r * d + ch) * n + s] = h;
                        acc += cm.data()[r * n + s] * h;
                    }
                    y[r * d + ch] = acc;
                }
            }
        }
        let op = Self { len, batch, channels: d, states: n, hidden };
        (op, Tensor::new(vec![len * batch, d], y).expect("scan output shape"))
    }
}

impl CustomOp for SelectiveScan {
    fn name(&self) -> &'static str {
        "selective_scan"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let [u, delta, a, bm, cm, d_skip] = inputs else { unreachable!("selective_scan has six inputs") };
        let (len, batch, d, n) = (self.len, self.batch, self.channels, self.states);
        let rows = len * batch;
        let mut gu = vec![0.0; rows * d];
        let mut gdelta = vec![0.0; rows * d];
        let mut ga = vec![0.0; d * n];
        let mut gb = vec![0.0; rows * n];
        let mut gc = vec![0.0; rows * n];
        let mut gd = vec![0.0; d];
        // Gradient flowing into the hidden state carried from step t to t+1.
        let mut carry = vec![0.0; batch * d * n];
        let g = grad.data();
        for t in (0..len).rev() {
            for b in 0..batch {
                let r = t * batch + b;
                for ch in 0..d {
                    let gy = g[r * d + ch];
                    let ut = u.data()[r * d + ch];
                    let dt = delta.data()[r * d + ch];
                    let mut g_u = gy * d_skip.data()[ch];
                    gd[ch] += gy * ut;
                    let mut g_dt = 0.0;
                    for s in 0..n {
                        let ai = a.data()[ch * n + s];
                        let x = dt * ai;
                        let a_bar = x.exp();
                        let ph = phi(x);
                        let bs = bm.data()[r * n + s];
                        let b_bar = dt * ph * bs;
                        let h = self.hidden[(r * d + ch) * n + s];
                        let prev = if t == 0 { 0.0 } else { self.hidden[((r - batch) * d + ch) * n + s] };
                        gc[r * n + s] += gy * h;
                        let slot = &mut carry[(b * d + ch) * n + s];
                        let gh = *slot + gy * cm.data()[r * n + s];
                        let g_abar = gh * prev;
                        let g_bbar = gh * ut;
                        g_u += gh * b_bar;
                        // d(Δ·φ(Δa)·b)/dΔ = b·exp(Δa).
                        g_dt += g_abar * ai * a_bar + g_bbar * bs * a_bar;
                        ga[ch * n + s] += g_abar * dt * a_bar + g_bbar * dt * dt * bs * phi_prime(x);
                        gb[r * n + s] += g_bbar * dt * ph;
                        *slot = gh * a_bar;
                    }
                    gu[r * d + ch] = g_u;
                    gdelta[r * d + ch] = g_dt;
                }
            }
        }
        let t = |shape: Vec<usize>, data| Some(Tensor::new(shape, data).expect("gradient shape"));
        vec![
            t(vec![rows, d], gu),
            t(vec![rows, d], gdelta),
            t(vec![d, n], ga),
            t(vec![rows, n], gb),
            t(vec![rows, n], gc),
            t(vec![d], gd),
        ]
    }
}

/// Batched selective scan on the tape with exact zero-order hold.
///
/// Rows are time-major (`row = t·batch + b`). Shapes: `u`, `delta`
/// `[L·B, D]`; continuous diagonal `a` `[D, N]`; per-step `b_t`, `c_t`
/// `[L·B, N]` shared by all channels; `d_skip` `[D]`. Returns `[L·B, D]`.
/// The hidden state starts at zero for every sequence.
pub fn selective_scan_var<'t>(
    u: Var<'t>,
    delta: Var<'t>,
    a: Var<'t>,
    b_t: Var<'t>,
    c_t: Var<'t>,
    d_skip: Var<'t>,
    batch: usize,
) -> Result<Var<'t>> {
    let (uv, dv, av, bv, cv, sv) = (u.value(), delta.value(), a.value(), b_t.value(), c_t.value(), d_skip.value());
    if uv.rank() != 2 || av.rank() != 2 || batch == 0 || uv.shape()[0] % batch != 0 {
        return Err(dimension(
            "selective_scan",
            format!("u [L·{batch}, D] and a [D, N]"),
            format!("u {:?}, a {:?}", uv.shape(), av.shape()),
        ));
    }
    let (rows, d) = (uv.shape()[0], uv.shape()[1]);
    let n = av.shape()[1];
    let checks = [
        ("delta", dv.shape(), vec![rows, d]),
        ("a", av.shape(), vec![d, n]),
        ("b_t", bv.shape(), vec![rows, n]),
        ("c_t", cv.shape(), vec![rows, n]),
        ("d_skip", sv.shape(), vec![d]),
    ];
    for (name, got, want) in checks {
        if got != want.as_slice() {
            return Err(dimension("selective_scan", format!("{name} of shape {want:?}"), format!("{got:?}")));
        }
    }
    if dv.data().iter().any(|&x| x <= 0.0) {
        return Err(DsseError::InvalidArgument("selective_scan: step Δ must be positive".into()));
    }
    let (op, out) = SelectiveScan::forward(rows / batch, batch, &uv, &dv, &av, &bv, &cv, &sv);
    u.tape()
        .custom(&[u, delta, a, b_t, c_t, d_skip], out, Box::new(op))
        .map_err(|e| match e {
            AdError::NonFinite { .. } => DsseError::InvalidArgument("selective_scan produced a non-finite output".into()),
            other => other.into(),
        })
}
