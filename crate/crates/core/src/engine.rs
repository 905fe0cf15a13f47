//! Selective-SSM backbone and the heads that turn its hidden sequence into
//! per-step diagonal filter matrices.
//!
//! Sequences are batched time-major: a `[L·B, width]` tensor holds row
//! `t·B + b` for step `t` of sequence `b`.

use dsse_autodiff::{inverse_softplus, Bound, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, DsseError, Result};
use crate::nn::{Linear, RmsNorm};
use crate::ssm::{realize_dynamics_var, selective_scan_var, DYNAMICS_MARGIN};

/// Floor added to the predicted process variance.
pub const PROCESS_NOISE_FLOOR: f64 = 1e-6;

/// Process variance the noise head emits for a zero hidden vector at
/// initialization.
pub const INITIAL_PROCESS_NOISE: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub blocks: usize,
    pub d_model: usize,
    /// Hidden states per channel in each selective scan.
    pub state_size: usize,
    /// Lower bound on the filter's discretization step; keeps every
    /// generated `A_t` at most `exp(−floor·1e-4)`.
    pub delta_floor: f64,
    /// Use one process-noise vector per window (the last step's) instead
    /// of one per step.
    pub freeze_process_noise: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { blocks: 2, d_model: 256, state_size: 16, delta_floor: 0.02, freeze_process_noise: false }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.d_model == 0 || self.state_size == 0 {
            return Err(DsseError::Config("engine: blocks, d_model and state_size must be positive".into()));
        }
        if !(self.delta_floor > 0.0) {
            return Err(DsseError::Config("engine: delta_floor must be positive".into()));
        }
        Ok(())
    }

    /// Largest transition entry the heads can produce.
    pub fn max_transition(&self) -> f64 {
        (-self.delta_floor * DYNAMICS_MARGIN).exp()
    }
}

/// Projection → selective scan with input-dependent `Δ`, `B`, `C` →
/// SiLU gate → projection, with a residual connection.
#[derive(Clone, Debug)]
pub struct MambaBlock {
    pub norm: RmsNorm,
    pub in_proj: Linear,
    pub delta_proj: Linear,
    pub b_proj: Linear,
    pub c_proj: Linear,
    pub a_raw: ParamId,
    pub d_skip: ParamId,
    pub out_proj: Linear,
    pub d_model: usize,
}

impl MambaBlock {
    pub fn new(params: &mut ParamStore, name: &str, d_model: usize, state_size: usize, rng: &mut impl Rng) -> Result<Self> {
        let d = d_model;
        let norm = RmsNorm::new(params, &format!("{name}.norm"), d)?;
        let in_proj = Linear::new(params, &format!("{name}.in_proj"), d, 2 * d, true, rng)?;
        let delta_proj = Linear::with_scale(params, &format!("{name}.delta_proj"), d, d, true, (d as f64).powf(-0.5), rng)?;
        // Initial steps log-spaced over [1e-3, 1e-1] across channels.
        let bias: Vec<f64> = (0..d)
            .map(|i| {
                let frac = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.5 };
                inverse_softplus(10f64.powf(-3.0 + 2.0 * frac))
            })
            .collect();
        params.set(delta_proj.bias.expect("delta bias"), Tensor::vector(bias))?;
        let b_proj = Linear::new(params, &format!("{name}.b_proj"), d, state_size, false, rng)?;
        let c_proj = Linear::new(params, &format!("{name}.c_proj"), d, state_size, false, rng)?;
        // Continuous eigenvalues −1, −2, …, −N for every channel.
        let a_raw = Tensor::from_fn(&[d, state_size], |i| inverse_softplus((i % state_size + 1) as f64 - DYNAMICS_MARGIN));
        let a_raw = params.add(format!("{name}.a_raw"), a_raw)?;
        let d_skip = params.add(format!("{name}.d_skip"), Tensor::ones(&[d]))?;
        let out_proj = Linear::new(params, &format!("{name}.out_proj"), d, d, true, rng)?;
        Ok(Self { norm, in_proj, delta_proj, b_proj, c_proj, a_raw, d_skip, out_proj, d_model })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, u: Var<'t>, batch: usize) -> Result<Var<'t>> {
        let d = self.d_model;
        let xz = self.in_proj.forward(p, self.norm.forward(p, u)?)?;
        let stream = xz.slice(1, 0, d)?;
        let gate = xz.slice(1, d, d)?;
        let delta = self.delta_proj.forward(p, stream)?.softplus()?;
        let b_t = self.b_proj.forward(p, stream)?;
        let c_t = self.c_proj.forward(p, stream)?;
        let a = realize_dynamics_var(p.get(self.a_raw))?;
        let y = selective_scan_var(stream, delta, a, b_t, c_t, p.get(self.d_skip), batch)?;
        let out = self.out_proj.forward(p, y.mul(gate.silu()?)?)?;
        Ok(u.add(out)?)
    }
}

/// Input projection, stacked blocks and a final normalization.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub in_proj: Linear,
    pub blocks: Vec<MambaBlock>,
    pub norm: RmsNorm,
}

impl Backbone {
    pub fn new(params: &mut ParamStore, d_input: usize, config: &EngineConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let in_proj = Linear::new(params, "backbone.in_proj", d_input, config.d_model, true, rng)?;
        let blocks = (0..config.blocks)
            .map(|i| MambaBlock::new(params, &format!("backbone.block{i}"), config.d_model, config.state_size, rng))
            .collect::<Result<_>>()?;
        let norm = RmsNorm::new(params, "backbone.norm", config.d_model)?;
        Ok(Self { in_proj, blocks, norm })
    }

    /// `[L·B, d_input]` → `[L·B, d_model]`.
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>, batch: usize) -> Result<Var<'t>> {
        let rows = x.shape()[0];
        if rows == 0 || batch == 0 || rows % batch != 0 {
            return Err(dimension("backbone", format!("a non-empty multiple of batch {batch} rows"), rows));
        }
        let mut h = self.in_proj.forward(p, x)?;
        for block in &self.blocks {
            h = block.forward(p, h, batch)?;
        }
        self.norm.forward(p, h)
    }

    /// Zero every block's output projection so each block is the identity.
    pub fn zero_block_outputs(&self, params: &mut ParamStore) {
        for block in &self.blocks {
            block.out_proj.zero(params);
        }
    }
}

/// Per-step diagonal filter matrices, each `[L·B, d_lift]`.
#[derive(Clone, Copy, Debug)]
pub struct GeneratedMatrices<'t> {
    /// Transition, entries in (0, 1).
    pub transition: Var<'t>,
    /// Control weights on the lifted observation.
    pub control: Var<'t>,
    /// Process variance, entries > 0.
    pub process_noise: Var<'t>,
}

/// Backbone plus the three matrix heads.
#[derive(Clone, Debug)]
pub struct MatrixEngine {
    pub config: EngineConfig,
    pub backbone: Backbone,
    pub delta_head: Linear,
    /// Unconstrained continuous eigenvalues of the lifted dynamics, `[d_lift]`.
    pub a_raw: ParamId,
    pub control_head: Linear,
    pub noise_head: Linear,
    pub d_lift: usize,
}

impl MatrixEngine {
    pub fn new(params: &mut ParamStore, d_lift: usize, config: &EngineConfig, rng: &mut impl Rng) -> Result<Self> {
        let backbone = Backbone::new(params, d_lift, config, rng)?;
        let dm = config.d_model;
        let delta_head = Linear::new(params, "heads.delta", dm, d_lift, true, rng)?;
        // Continuous rates log-spaced over [0.01, 1].
        let a_raw = Tensor::from_fn(&[d_lift], |i| {
            let frac = if d_lift > 1 { i as f64 / (d_lift - 1) as f64 } else { 0.5 };
            inverse_softplus(10f64.powf(-2.0 + 2.0 * frac) - DYNAMICS_MARGIN)
        });
        let a_raw = params.add("heads.a_raw", a_raw)?;
        let control_head = Linear::new(params, "heads.control", dm, d_lift, true, rng)?;
        let noise_head = Linear::new(params, "heads.noise", dm, d_lift, true, rng)?;
        let noise_bias = Tensor::full(&[d_lift], inverse_softplus(INITIAL_PROCESS_NOISE));
        params.set(noise_head.bias.expect("noise bias"), noise_bias)?;
        Ok(Self { config: config.clone(), backbone, delta_head, a_raw, control_head, noise_head, d_lift })
    }

    /// Parameters owned by the heads (not the backbone).
    pub fn head_params(&self) -> usize {
        self.delta_head.num_params() + self.d_lift + self.control_head.num_params() + self.noise_head.num_params()
    }

    /// Matrices for every step of `lifted` (`[L·B, d_lift]`, time-major).
    pub fn forward<'t>(&self, p: &Bound<'t>, lifted: Var<'t>, batch: usize) -> Result<GeneratedMatrices<'t>> {
        let shape = lifted.shape();
        if shape.len() != 2 || shape[1] != self.d_lift {
            return Err(dimension("engine", format!("[L·B, {}]", self.d_lift), format!("{shape:?}")));
        }
        if shape[0] == 0 {
            return Err(DsseError::InvalidArgument("engine: empty history".into()));
        }
        let h = self.backbone.forward(p, lifted, batch)?;
        let rows = shape[0];
        let delta = self.delta_head.forward(p, h)?.softplus()?.add_scalar(self.config.delta_floor)?;
        let a = realize_dynamics_var(p.get(self.a_raw))?;
        let transition = delta.mul_row(a)?.exp()?;
        let control = self.control_head.forward(p, h)?;
        let mut process_noise = self.noise_head.forward(p, h)?.softplus()?.add_scalar(PROCESS_NOISE_FLOOR)?;
        if self.config.freeze_process_noise {
            let last = process_noise.slice(0, rows - batch, batch)?;
            let copies = vec![last; rows / batch];
            process_noise = lifted.tape().concat(&copies, 0)?;
        }
        Ok(GeneratedMatrices { transition, control, process_noise })
    }
}
