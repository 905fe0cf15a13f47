use serde::{Deserialize, Serialize};

use crate::error::{AdError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

/// Adam moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub(crate) first: Vec<Tensor>,
    pub(crate) second: Vec<Tensor>,
    pub(crate) step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// One update with learning rate `lr` (the schedule's current value).
    ///
    /// Weight decay is applied first, as `p ← p − lr·wd·p`, then the
    /// bias-corrected moment step.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(AdError::Invalid(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if !(lr >= 0.0) {
            return Err(AdError::Invalid(format!("adam: learning rate {lr} must be non-negative")));
        }
        for (id, g) in params.ids().zip(grads) {
            if params.get(id).shape() != g.shape() {
                return Err(AdError::ShapeMismatch {
                    op: "adam",
                    lhs: params.get(id).shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps, weight_decay, .. } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, id) in params.ids().enumerate() {
            let p = params.get_mut(id).data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(grads[i].data()) {
                *p -= lr * weight_decay * *p;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(value)).unwrap();
        store
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = single(0.0);
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut adam = AdamState::new(cfg, &store);
        adam.step(&mut store, &[Tensor::scalar(1.0)], 1e-3).unwrap();
        let w = store.get(store.id("w").unwrap()).item();
        assert!((w + 1e-3).abs() < 1e-10, "{w}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_grad_or_zero_lr_is_identity() {
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut store = single(0.7);
        let mut adam = AdamState::new(cfg, &store);
        adam.step(&mut store, &[Tensor::scalar(0.0)], 1e-3).unwrap();
        assert_eq!(store.get(store.id("w").unwrap()).item(), 0.7);

        let cfg = AdamConfig::default();
        let mut adam = AdamState::new(cfg, &store);
        adam.step(&mut store, &[Tensor::scalar(3.0)], 0.0).unwrap();
        assert_eq!(store.get(store.id("w").unwrap()).item(), 0.7);
    }

    #[test]
    fn decoupled_decay_shrinks_param() {
        let mut store = single(2.0);
        let mut adam = AdamState::new(AdamConfig { weight_decay: 0.5, ..AdamConfig::default() }, &store);
        adam.step(&mut store, &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert!((store.get(store.id("w").unwrap()).item() - 1.9).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = single(0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        assert!(adam.step(&mut store, &[Tensor::zeros(&[2])], 1e-3).is_err());
        assert_eq!(adam.step_count(), 0);
    }
}
