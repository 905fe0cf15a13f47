//! Learned lifting into a space where the dynamics are close to linear,
//! and the decoder back to bus voltages.

use dsse_autodiff::{Bound, ParamStore, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, DsseError, Result};
use crate::nn::{mse, Activation, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    /// Encoder input width per frame.
    pub d_in: usize,
    /// Expansion factor, `d_lift = ceil(rho · d_in)`.
    pub rho: f64,
    /// Width of both hidden layers of the encoder and the decoder.
    pub hidden: usize,
}

impl LiftConfig {
    pub fn d_lift(&self) -> usize {
        (self.rho * self.d_in as f64).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.hidden == 0 {
            return Err(DsseError::Config("lift: d_in and hidden must be positive".into()));
        }
        if !(1.5..=2.0).contains(&self.rho) {
            return Err(DsseError::Config(format!("lift: rho {} outside [1.5, 2]", self.rho)));
        }
        Ok(())
    }
}

/// Encoder `ψ` and decoder `ψ⁻¹`.
///
/// The decoder reads `[μ; P]` (mean and diagonal variance of a lifted
/// belief) and emits `[vm; va]` for every bus.
#[derive(Clone, Debug)]
pub struct Koopman {
    pub config: LiftConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Koopman {
    pub fn new(params: &mut ParamStore, config: &LiftConfig, d_state: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (h, dl) = (config.hidden, config.d_lift());
        let encoder = Mlp::new(params, "encoder", &[config.d_in, h, h, dl], Activation::Tanh, rng)?;
        let decoder = Mlp::new(params, "decoder", &[2 * dl, h, h, d_state], Activation::Tanh, rng)?;
        Ok(Self { config: config.clone(), encoder, decoder })
    }

    pub fn d_lift(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn d_state(&self) -> usize {
        self.decoder.output_dim()
    }

    /// Lift `[rows, d_in]` frames to `[rows, d_lift]`.
    pub fn lift<'t>(&self, p: &Bound<'t>, frames: Var<'t>) -> Result<Var<'t>> {
        let shape = frames.shape();
        if shape.len() != 2 || shape[1] != self.encoder.input_dim() {
            return Err(dimension("lift", format!("[rows, {}]", self.encoder.input_dim()), format!("{shape:?}")));
        }
        self.encoder.forward(p, frames)
    }

    /// Decode beliefs `[rows, d_lift]` (mean) and `[rows, d_lift]` (variance).
    pub fn reconstruct<'t>(&self, p: &Bound<'t>, mean: Var<'t>, var: Var<'t>) -> Result<Var<'t>> {
        if var.value().data().iter().any(|&v| v < 0.0) {
            return Err(DsseError::InvalidArgument("reconstruct: negative variance".into()));
        }
        let joined = mean.tape().concat(&[mean, var], 1)?;
        self.decoder.forward(p, joined)
    }

    /// Decode lifted frames as zero-variance beliefs.
    pub fn reconstruct_lifted<'t>(&self, p: &Bound<'t>, lifted: Var<'t>) -> Result<Var<'t>> {
        let zeros = lifted.tape().zeros(&lifted.shape());
        self.reconstruct(p, lifted, zeros)
    }
}

/// Weights of the training loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_pred: f64,
    pub lambda_rec: f64,
    /// Lifted-space one-step term, `MSE(μ⁻_{k+1}, ψ(x_{k+1}))`, with the
    /// lifted target held constant. Only the filter variant has lifted
    /// one-step predictions.
    pub lambda_lin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_pred: 1.0, lambda_rec: 0.5, lambda_lin: 0.5 }
    }
}

/// `λ_pred·MSE(x̂_{k+1}, x*_{k+1}) + λ_rec·MSE(ψ⁻¹(ψ(x_k)), x*_k)`.
pub fn koopman_loss<'t>(
    predicted_next: Var<'t>,
    true_next: Var<'t>,
    reconstructed: Var<'t>,
    true_now: Var<'t>,
    weights: LossWeights,
) -> Result<Var<'t>> {
    let pred = mse(predicted_next, true_next)?.scale(weights.lambda_pred)?;
    let rec = mse(reconstructed, true_now)?.scale(weights.lambda_rec)?;
    Ok(pred.add(rec)?)
}
