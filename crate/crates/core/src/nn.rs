//! Dense layers over the autodiff tape.

use dsse_autodiff::{Bound, CustomOp, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, Result};

/// `y = x·W + b` applied row-wise to `[rows, fan_in]` inputs.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::with_scale(params, name, fan_in, fan_out, bias, limit, rng)
    }

    /// Uniform weights in `[-limit, limit]`, zero bias.
    pub fn with_scale(
        params: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        limit: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = Tensor::from_fn(&[fan_in, fan_out], |_| {
            if limit > 0.0 {
                rng.random_range(-limit..=limit)
            } else {
                0.0
            }
        });
        let weight = params.add(format!("{name}.weight"), w)?;
        let bias = if bias { Some(params.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]))?) } else { None };
        Ok(Self { weight, bias, fan_in, fan_out })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.fan_in {
            return Err(dimension("linear", format!("[rows, {}]", self.fan_in), format!("{shape:?}")));
        }
        let y = x.matmul(p.get(self.weight))?;
        Ok(match self.bias {
            Some(b) => y.add_row(p.get(b))?,
            None => y,
        })
    }

    pub fn num_params(&self) -> usize {
        self.fan_in * self.fan_out + if self.bias.is_some() { self.fan_out } else { 0 }
    }

    /// Set weights (and bias) to zero.
    pub fn zero(&self, params: &mut ParamStore) {
        params.get_mut(self.weight).data_mut().fill(0.0);
        if let Some(b) = self.bias {
            params.get_mut(b).data_mut().fill(0.0);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

/// Feed-forward network; the activation follows every layer but the last.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `widths = [input, hidden…, output]`.
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        widths: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").fan_out
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, h)?;
            if i + 1 < self.layers.len() && self.activation == Activation::Tanh {
                h = h.tanh()?;
            }
        }
        Ok(h)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }
}

/// Added to the mean square before the root.
const RMS_EPS: f64 = 1e-6;

/// Each row divided by its root mean square, then scaled per column by a
/// learned weight (initialized to one).
#[derive(Clone, Debug)]
pub struct RmsNorm {
    pub weight: ParamId,
    pub dim: usize,
}

struct RmsRows {
    rms: Vec<f64>,
}

impl CustomOp for RmsRows {
    fn name(&self) -> &'static str {
        "rms_norm"
    }

    fn backward(&self, _inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let d = output.shape()[1];
        let mut dx = grad.clone();
        for ((g, y), rms) in dx.data_mut().chunks_mut(d).zip(output.data().chunks(d)).zip(&self.rms) {
            let dot = g.iter().zip(y).map(|(g, y)| g * y).sum::<f64>() / d as f64;
            for (g, y) in g.iter_mut().zip(y) {
                *g = (*g - y * dot) / rms;
            }
        }
        vec![Some(dx)]
    }
}

impl RmsNorm {
    pub fn new(params: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let weight = params.add(format!("{name}.weight"), Tensor::ones(&[dim]))?;
        Ok(Self { weight, dim })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(dimension("rms_norm", format!("[rows, {}]", self.dim), format!("{shape:?}")));
        }
        let value = x.value();
        let d = self.dim;
        let rms: Vec<f64> = value
            .data()
            .chunks(d)
            .map(|row| (row.iter().map(|v| v * v).sum::<f64>() / d as f64 + RMS_EPS).sqrt())
            .collect();
        let mut out = value.as_ref().clone();
        for (row, r) in out.data_mut().chunks_mut(d).zip(&rms) {
            row.iter_mut().for_each(|v| *v /= r);
        }
        let normed = x.tape().custom(&[x], out, Box::new(RmsRows { rms }))?;
        Ok(normed.mul_row(p.get(self.weight))?)
    }

    pub fn num_params(&self) -> usize {
        self.dim
    }
}

/// Mean squared difference of two equally shaped tensors.
pub fn mse<'t>(prediction: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    Ok(prediction.sub(target)?.square()?.mean()?)
}
