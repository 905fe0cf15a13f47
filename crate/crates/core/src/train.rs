//! Training loop, learning-rate schedule, evaluation and checkpoints.

use std::path::Path;

use dsse_autodiff::{checkpoint, AdamConfig, AdamState};
use dsse_feeder::{stream_rng, DatasetConfig, Stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{subsample, Normalizer, SeriesData, WindowSplits};
use crate::error::{DsseError, Result};
use crate::koopman::LossWeights;
use crate::metrics::MetricsReport;
use crate::model::{Dims, Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Fraction of steps with a linear learning-rate ramp from zero.
    pub warmup_fraction: f64,
    pub total_steps: usize,
    pub seed: u64,
    pub lambda_pred: f64,
    pub lambda_rec: f64,
    pub lambda_lin: f64,
    /// Validation cadence in steps (0 disables it).
    pub validate_every: usize,
    /// Trailing fraction of the training split held out for validation.
    pub validation_fraction: f64,
    /// Cap on windows per validation or test pass (0 = all).
    pub max_eval_windows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-2,
            batch_size: 64,
            warmup_fraction: 0.08,
            total_steps: 5000,
            seed: 0,
            lambda_pred: 1.0,
            lambda_rec: 0.5,
            lambda_lin: 0.5,
            validate_every: 100,
            validation_fraction: 0.1,
            max_eval_windows: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(DsseError::Config("train: lr and weight_decay must be non-negative".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(DsseError::Config(format!("train: warmup_fraction {} outside (0, 1)", self.warmup_fraction)));
        }
        if self.total_steps == 0 || self.batch_size == 0 {
            return Err(DsseError::Config("train: total_steps and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(DsseError::Config("train: validation_fraction outside [0, 1)".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda_pred: self.lambda_pred, lambda_rec: self.lambda_rec, lambda_lin: self.lambda_lin }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }
}

/// Linear warm-up to `lr` over `warmup_fraction · total_steps`, then
/// cosine decay to zero at `total_steps`.
pub fn lr_at(step: usize, config: &TrainConfig) -> Result<f64> {
    let total = config.total_steps;
    if step > total {
        return Err(DsseError::InvalidArgument(format!("lr_at: step {step} beyond {total}")));
    }
    let warm = config.warmup_fraction * total as f64;
    let s = step as f64;
    if s < warm {
        return Ok(config.lr * s / warm);
    }
    let progress = (s - warm) / (total as f64 - warm);
    Ok(config.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Validation voltage-magnitude MAE, p.u.
    pub val_vm_mae: Option<f64>,
}

pub struct Trained {
    pub model: Model,
    pub adam: AdamState,
    pub curve: Vec<LossRecord>,
}

/// Windows per forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

/// Train with shuffled mini-batches, Adam and the warm-up/cosine schedule.
pub fn train(mut model: Model, data: &SeriesData, splits: &WindowSplits, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let weights = config.weights();
    let window = model.config.window;
    let mut adam = AdamState::new(config.adam(), &model.params);
    let mut rng = stream_rng(config.seed, Stream::Shuffle, 0);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let bs = config.batch_size.min(splits.train.len());
    let validation = subsample(&splits.validation, config.max_eval_windows);
    let mut curve = Vec::with_capacity(config.total_steps);
    for step in 0..config.total_steps {
        if cursor + bs > order.len() {
            order = splits.train.clone();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = data.batch(&order[cursor..cursor + bs], window)?;
        cursor += bs;
        let (loss, grads) = model.loss_and_gradients(&batch, weights).map_err(|e| match e {
            DsseError::Autodiff(dsse_autodiff::AdError::NonFinite { .. }) => non_finite(step, &model.config, config),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(non_finite(step, &model.config, config));
        }
        let lr = lr_at(step, config)?;
        adam.step(&mut model.params, &grads, lr)?;
        let mut record = LossRecord { step, lr, train_loss: loss, val_loss: None, val_vm_mae: None };
        let last = step + 1 == config.total_steps;
        if config.validate_every > 0 && !validation.is_empty() && ((step + 1) % config.validate_every == 0 || last) {
            let (val_loss, report) = validate(&model, data, &validation, weights)?;
            record.val_loss = Some(val_loss);
            record.val_vm_mae = Some(report.magnitude.mae);
        }
        curve.push(record);
    }
    Ok(Trained { model, adam, curve })
}

fn non_finite(step: usize, model: &ModelConfig, train: &TrainConfig) -> DsseError {
    let config = json!({ "model": model, "train": train }).to_string();
    DsseError::NonFiniteLoss { step, config }
}

fn validate(model: &Model, data: &SeriesData, ends: &[usize], weights: LossWeights) -> Result<(f64, MetricsReport)> {
    let mut total = 0.0;
    for chunk in ends.chunks(EVAL_CHUNK) {
        let batch = data.batch(chunk, model.config.window)?;
        total += model.loss(&batch, weights)? * chunk.len() as f64;
    }
    let eval = evaluate(model, data, ends)?;
    Ok((total / ends.len() as f64, eval.report))
}

/// Physical `[vm; va]` estimates for windows ending at `ends`.
pub fn predict_windows(model: &Model, data: &SeriesData, ends: &[usize]) -> Result<Vec<Vec<f64>>> {
    let d = data.d_state();
    let mut out = Vec::with_capacity(ends.len());
    for chunk in ends.chunks(EVAL_CHUNK) {
        let batch = data.batch(chunk, model.config.window)?;
        let pred = model.predict(&batch)?;
        for row in pred.data().chunks(d) {
            out.push(data.normalizer.denormalize_state(row));
        }
    }
    Ok(out)
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub ends: Vec<usize>,
    pub truth: Vec<Vec<f64>>,
    pub predictions: Vec<Vec<f64>>,
}

pub fn evaluate(model: &Model, data: &SeriesData, ends: &[usize]) -> Result<Evaluation> {
    if ends.is_empty() {
        return Err(DsseError::InvalidArgument("evaluate: empty test set".into()));
    }
    let predictions = predict_windows(model, data, ends)?;
    let truth: Vec<Vec<f64>> = ends.iter().map(|&e| data.truth(e).to_vec()).collect();
    let report = MetricsReport::compute(&truth, &predictions, data.n_buses)?;
    Ok(Evaluation { report, ends: ends.to_vec(), truth, predictions })
}

/// Reports of the persistence and training-mean predictors on `ends`.
pub fn baselines(data: &SeriesData, ends: &[usize]) -> Result<(MetricsReport, MetricsReport)> {
    let truth: Vec<Vec<f64>> = ends.iter().map(|&e| data.truth(e).to_vec()).collect();
    let persistence: Vec<Vec<f64>> = ends.iter().map(|&e| data.persistence(e)).collect();
    let mean = vec![data.mean_state(); ends.len()];
    Ok((
        MetricsReport::compute(&truth, &persistence, data.n_buses)?,
        MetricsReport::compute(&truth, &mean, data.n_buses)?,
    ))
}

/// Everything needed to rebuild a trained model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub dims: Dims,
    pub normalizer: Normalizer,
    pub train: TrainConfig,
    /// Dataset the model was trained on, regenerable from `data_seed`.
    pub dataset: DatasetConfig,
    pub data_seed: u64,
    pub observed: Vec<usize>,
}

pub fn save_checkpoint(path: &Path, model: &Model, adam: Option<&AdamState>, meta: &CheckpointMeta) -> Result<()> {
    checkpoint::save(path, &model.params, adam, &serde_json::to_value(meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let ckpt = checkpoint::load(path)?;
    let meta: CheckpointMeta = serde_json::from_value(ckpt.metadata)?;
    let mut model = Model::new(&meta.model, meta.dims, 0)?;
    if model.params.len() != ckpt.params.len() {
        return Err(DsseError::Config(format!(
            "checkpoint has {} tensors, model expects {}",
            ckpt.params.len(),
            model.params.len()
        )));
    }
    for (_, name, value) in ckpt.params.iter() {
        let id = model
            .params
            .id(name)
            .ok_or_else(|| DsseError::Config(format!("checkpoint tensor {name:?} not in model")))?;
        model.params.set(id, value.clone())?;
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let c = TrainConfig { total_steps: 1000, ..TrainConfig::default() };
        assert_eq!(lr_at(0, &c).unwrap(), 0.0);
        assert!((lr_at(80, &c).unwrap() - 1e-3).abs() < 1e-15);
        assert!(lr_at(1000, &c).unwrap().abs() < 1e-18);
        assert!((lr_at(540, &c).unwrap() - 0.5e-3).abs() < 1e-15);
        assert!(lr_at(1001, &c).is_err());
        // Both sides of the junction approach lr.
        let eps = 1e-9;
        let left = c.lr * (80.0 - eps) / 80.0;
        assert!((left - lr_at(80, &c).unwrap()).abs() < 1e-12);
    }
}
