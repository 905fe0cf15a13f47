//! End-to-end estimators.
//!
//! `MambaDsse`: lift every frame → generate per-step filter matrices →
//! diagonal Kalman filter → decode the final posterior.
//! `MambaMixer`: lift every frame → the same selective-SSM backbone →
//! decode the last hidden vector directly, with no filter.

use dsse_autodiff::{inverse_softplus, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::WindowBatch;
use crate::engine::{Backbone, EngineConfig, MatrixEngine};
use crate::error::{dimension, DsseError, Result};
use crate::filter::{filter_sequence_var, initial_belief_var, FilterTrace, MEASUREMENT_NOISE_FLOOR};
use crate::koopman::{koopman_loss, Koopman, LiftConfig, LossWeights};
use crate::nn::{mse, Activation, Mlp};

/// Starting value of every diagonal entry of `R`, in lifted units.
pub const INITIAL_MEASUREMENT_NOISE: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MambaDsse,
    MambaMixer,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::MambaDsse, Variant::MambaMixer];

    pub fn label(self) -> &'static str {
        match self {
            Variant::MambaDsse => "dsse",
            Variant::MambaMixer => "mixer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Frames per input window.
    pub window: usize,
    /// Lift expansion factor.
    pub rho: f64,
    /// Hidden width of encoder and decoder.
    pub hidden: usize,
    pub engine: EngineConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { variant: Variant::MambaDsse, window: 32, rho: 1.5, hidden: 64, engine: EngineConfig::default() }
    }
}

/// Input and output sizes fixed by the feeder and sensor placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d_in: usize,
    pub n_buses: usize,
}

impl Dims {
    pub fn d_state(&self) -> usize {
        2 * self.n_buses
    }
}

#[derive(Clone, Debug)]
enum Parts {
    Dsse { engine: MatrixEngine, noise_raw: ParamId },
    Mixer { backbone: Backbone, head: Mlp },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: Dims,
    pub params: ParamStore,
    pub koopman: Koopman,
    parts: Parts,
}

/// Forward pass over one batch.
pub struct Forward<'t> {
    /// Normalized state estimate at each window's last step, `[B, 2n]`.
    pub prediction: Var<'t>,
    /// Training loss, when requested.
    pub loss: Option<Var<'t>>,
    /// Lifted frames, `[L·B, d_lift]`.
    pub lifted: Var<'t>,
    /// Filter trajectory (`MambaDsse` only).
    pub trace: Option<FilterTrace<'t>>,
    /// Realized measurement variance (`MambaDsse` only).
    pub measurement_noise: Option<Var<'t>>,
}

/// Hidden width `w` of the mixer's direct decoder
/// (`d_model → w → w → d_state`) whose parameter count is closest to
/// `target`.
pub fn mixer_head_width(d_model: usize, d_state: usize, target: usize) -> usize {
    let count = |w: usize| d_model * w + w + w * w + w + w * d_state + d_state;
    let mut w = 1;
    while count(w + 1) <= target {
        w += 1;
    }
    if count(w + 1).abs_diff(target) < count(w).abs_diff(target) {
        w + 1
    } else {
        w
    }
}

impl Model {
    pub fn new(config: &ModelConfig, dims: Dims, seed: u64) -> Result<Self> {
        if config.window == 0 {
            return Err(DsseError::Config("model: window must be ≥ 1".into()));
        }
        let mut rng = dsse_feeder::stream_rng(seed, dsse_feeder::Stream::Init, 0);
        let mut params = ParamStore::new();
        let lift = LiftConfig { d_in: dims.d_in, rho: config.rho, hidden: config.hidden };
        let koopman = Koopman::new(&mut params, &lift, dims.d_state(), &mut rng)?;
        let d_lift = koopman.d_lift();
        let parts = match config.variant {
            Variant::MambaDsse => {
                let engine = MatrixEngine::new(&mut params, d_lift, &config.engine, &mut rng)?;
                let noise_raw = params.add("filter.noise_raw", Tensor::full(&[d_lift], inverse_softplus(INITIAL_MEASUREMENT_NOISE)))?;
                Parts::Dsse { engine, noise_raw }
            }
            Variant::MambaMixer => {
                let backbone = Backbone::new(&mut params, d_lift, &config.engine, &mut rng)?;
                let target = dsse_extra_params(d_lift, &config.engine);
                let w = mixer_head_width(config.engine.d_model, dims.d_state(), target);
                let head = Mlp::new(&mut params, "mixer_head", &[config.engine.d_model, w, w, dims.d_state()], Activation::Tanh, &mut rng)?;
                Parts::Mixer { backbone, head }
            }
        };
        Ok(Self { config: config.clone(), dims, params, koopman, parts })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn d_lift(&self) -> usize {
        self.koopman.d_lift()
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// The backbone shared by both variants.
    pub fn backbone(&self) -> &Backbone {
        match &self.parts {
            Parts::Dsse { engine, .. } => &engine.backbone,
            Parts::Mixer { backbone, .. } => backbone,
        }
    }

    pub fn engine(&self) -> Option<&MatrixEngine> {
        match &self.parts {
            Parts::Dsse { engine, .. } => Some(engine),
            Parts::Mixer { .. } => None,
        }
    }

    pub fn measurement_noise_param(&self) -> Option<ParamId> {
        match &self.parts {
            Parts::Dsse { noise_raw, .. } => Some(*noise_raw),
            Parts::Mixer { .. } => None,
        }
    }

    /// Zero every block's output projection (each block becomes the identity).
    pub fn zero_block_outputs(&mut self) {
        let backbone = self.backbone().clone();
        backbone.zero_block_outputs(&mut self.params);
    }

    /// Run the model on `batch` with parameters bound to `p`. The training
    /// loss is built only when `weights` is given.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        tape: &'t Tape,
        batch: &WindowBatch,
        weights: Option<LossWeights>,
    ) -> Result<Forward<'t>> {
        if batch.frames.shape()[1] != self.dims.d_in || batch.targets.shape()[1] != self.dims.d_state() {
            return Err(dimension(
                "model",
                format!("frames [.., {}] and targets [.., {}]", self.dims.d_in, self.dims.d_state()),
                format!("{:?} and {:?}", batch.frames.shape(), batch.targets.shape()),
            ));
        }
        let (b, l) = (batch.batch, batch.window);
        let frames = tape.constant(batch.frames.clone());
        let lifted = self.koopman.lift(p, frames)?;
        let (prediction, trace, r) = match &self.parts {
            Parts::Dsse { engine, noise_raw } => {
                let matrices = engine.forward(p, lifted, b)?;
                let r = p.get(*noise_raw).softplus()?.add_scalar(MEASUREMENT_NOISE_FLOOR)?;
                let init = initial_belief_var(tape, b, self.d_lift());
                let trace = filter_sequence_var(lifted, &matrices, r, init, None)?;
                let last = trace.last_posterior();
                (self.koopman.reconstruct(p, last.mean, last.var)?, Some(trace), Some(r))
            }
            Parts::Mixer { backbone, head } => {
                let h = backbone.forward(p, lifted, b)?;
                (head.forward(p, h.slice(0, (l - 1) * b, b)?)?, None, None)
            }
        };
        let loss = match weights {
            None => None,
            Some(w) => {
                let targets = tape.constant(batch.targets.clone());
                let recon = self.koopman.reconstruct_lifted(p, lifted)?;
                let final_step = mse(prediction, targets.slice(0, (l - 1) * b, b)?)?;
                let rest = match &trace {
                    Some(trace) if l > 1 => {
                        // One-step predictions: the prior of step t uses steps < t.
                        let means: Vec<Var<'t>> = trace.priors[1..].iter().map(|pr| pr.mean).collect();
                        let vars: Vec<Var<'t>> = trace.priors[1..].iter().map(|pr| pr.var).collect();
                        let (prior_means, prior_vars) = (tape.concat(&means, 0)?, tape.concat(&vars, 0)?);
                        let predicted = self.koopman.reconstruct(p, prior_means, prior_vars)?;
                        // The target frames are held constant so the term cannot shrink the lift.
                        let next = tape.constant(lifted.slice(0, b, (l - 1) * b)?.value().as_ref().clone());
                        let lin = mse(prior_means, next)?;
                        koopman_loss(predicted, targets.slice(0, b, (l - 1) * b)?, recon, targets, w)?.add(lin.scale(w.lambda_lin)?)?
                    }
                    _ => mse(recon, targets)?.scale(w.lambda_rec)?,
                };
                Some(final_step.add(rest)?)
            }
        };
        Ok(Forward { prediction, loss, lifted, trace, measurement_noise: r })
    }

    /// Training loss and its gradient for every parameter (store order).
    pub fn loss_and_gradients(&self, batch: &WindowBatch, weights: LossWeights) -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let out = self.forward(&p, &tape, batch, Some(weights))?;
        let loss = out.loss.expect("loss requested");
        let grads = tape.backward(loss)?;
        Ok((loss.item(), p.gradients(&grads)))
    }

    /// Training loss without gradients.
    pub fn loss(&self, batch: &WindowBatch, weights: LossWeights) -> Result<f64> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        Ok(self.forward(&p, &tape, batch, Some(weights))?.loss.expect("loss requested").item())
    }

    /// Normalized estimates `[B, 2n]` with frozen parameters.
    pub fn predict(&self, batch: &WindowBatch) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let out = self.forward(&p, &tape, batch, None)?;
        Ok(out.prediction.value().as_ref().clone())
    }
}

/// Parameters the filter variant has beyond the shared encoder, decoder
/// and backbone: matrix heads plus the measurement-noise vector.
fn dsse_extra_params(d_lift: usize, engine: &EngineConfig) -> usize {
    let head = engine.d_model * d_lift + d_lift;
    3 * head + d_lift + d_lift
}
