mod common;

use std::sync::OnceLock;

use common::{ad, rng, store_gradient_error, uniform};
use dsse_autodiff::Tape;
use dsse_feeder::{Dataset, DatasetConfig, ObserveConfig};
use mamba_dsse::config::RunConfig;
use mamba_dsse::data::{subsample, window_splits, Normalizer, SeriesData, WindowBatch};
use mamba_dsse::engine::EngineConfig;
use mamba_dsse::experiments::{fit, Fitted};
use mamba_dsse::koopman::LossWeights;
use mamba_dsse::model::{Dims, Model, ModelConfig, Variant};
use mamba_dsse::train::{load_checkpoint, save_checkpoint, train, CheckpointMeta, TrainConfig};

fn micro_config(variant: Variant, window: usize) -> ModelConfig {
    ModelConfig {
        variant,
        window,
        rho: 1.5,
        hidden: 6,
        engine: EngineConfig { blocks: 1, d_model: 4, state_size: 2, ..EngineConfig::default() },
    }
}

fn series(n_buses: usize, seed: u64) -> (Dataset, SeriesData) {
    // At least one sensor on the smallest feeders.
    let observe = ObserveConfig { observability: (1.0 / n_buses as f64).max(0.1), ..ObserveConfig::default() };
    let ds = Dataset::generate(&DatasetConfig { n_buses, days: 4, observe, ..DatasetConfig::default() }, seed).unwrap();
    let norm = Normalizer::fit(&ds, ds.split.train_end).unwrap();
    let data = SeriesData::new(&ds, &norm).unwrap();
    (ds, data)
}

fn dims(data: &SeriesData) -> Dims {
    Dims { d_in: data.d_in, n_buses: data.n_buses }
}

fn batch(data: &SeriesData, window: usize, b: usize, seed: u64) -> WindowBatch {
    let mut r = rng(seed);
    let ends: Vec<usize> = (0..b).map(|_| rand::Rng::random_range(&mut r, window - 1..data.steps)).collect();
    data.batch(&ends, window).unwrap()
}

fn dataset_12() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| Dataset::generate(&DatasetConfig::default(), 1).unwrap())
}

/// Desk-scale filter models trained on the 12-bus case with seeds 1, 2, 3.
fn trained_12() -> &'static [Fitted] {
    static RUNS: OnceLock<Vec<Fitted>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let desk = RunConfig::desk();
        (1..=3).map(|seed| fit(dataset_12(), &desk.model, &desk.train, seed).unwrap()).collect()
    })
}

#[test]
fn both_variants_emit_two_values_per_bus() {
    for n in [3, 12, 40] {
        let (_, data) = series(n, 2);
        for variant in Variant::ALL {
            for window in [1, 5] {
                let model = Model::new(&micro_config(variant, window), dims(&data), 3).unwrap();
                let out = model.predict(&batch(&data, window, 3, 4)).unwrap();
                assert_eq!(out.shape(), &[3, 2 * n], "{variant:?} n={n} L={window}");
            }
        }
    }
}

#[test]
fn micro_model_has_the_expected_widths() {
    let (ds, data) = series(3, 5);
    assert_eq!(ds.measurements.observed.len(), 1);
    let model = Model::new(&micro_config(Variant::MambaDsse, 6), dims(&data), 1).unwrap();
    assert_eq!(model.d_lift(), 8);
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let (_, data) = series(3, 5);
    let b = batch(&data, 6, 2, 6);
    for variant in Variant::ALL {
        let model = Model::new(&micro_config(variant, 6), dims(&data), 7).unwrap();
        let weights = LossWeights { lambda_lin: 0.0, ..LossWeights::default() };
        let err = store_gradient_error(&model.params, |t, p| {
            let out = ad(model.forward(p, t, &b, Some(weights)))?;
            Ok(out.loss.unwrap())
        });
        assert!(err < 1e-4, "{variant:?} end-to-end gradients: {err:e}");
    }

    // The lifted one-step term treats its target frames as constants, so
    // the reference also takes them from the unperturbed parameters.
    let model = Model::new(&micro_config(Variant::MambaDsse, 6), dims(&data), 7).unwrap();
    let (l, bs) = (b.window, b.batch);
    let target = {
        let tape = Tape::new();
        let p = model.params.bind_frozen(&tape);
        let out = model.forward(&p, &tape, &b, None).unwrap();
        out.lifted.slice(0, bs, (l - 1) * bs).unwrap().value().as_ref().clone()
    };
    let err = store_gradient_error(&model.params, |t, p| {
        let trace = ad(model.forward(p, t, &b, None))?.trace.unwrap();
        let means: Vec<_> = trace.priors[1..].iter().map(|pr| pr.mean).collect();
        let resid = t.concat(&means, 0)?.sub(t.constant(target.clone()))?;
        resid.square()?.mean()
    });
    assert!(err < 1e-4, "lifted one-step term gradients: {err:e}");

    // With those constants the full loss is the sum of its parts.
    let (full, _) = model.loss_and_gradients(&b, LossWeights::default()).unwrap();
    let partial = model.loss(&b, LossWeights { lambda_lin: 0.0, ..LossWeights::default() }).unwrap();
    let tape = Tape::new();
    let p = model.params.bind_frozen(&tape);
    let trace = model.forward(&p, &tape, &b, None).unwrap().trace.unwrap();
    let means: Vec<_> = trace.priors[1..].iter().map(|pr| pr.mean).collect();
    let lin = tape.concat(&means, 0).unwrap().value().data().iter().zip(target.data()).map(|(m, x)| (m - x).powi(2)).sum::<f64>()
        / target.len() as f64;
    assert!((full - partial - LossWeights::default().lambda_lin * lin).abs() < 1e-12);
}

#[test]
fn every_parameter_receives_gradient() {
    let (_, data) = series(12, 8);
    let b = batch(&data, 8, 4, 9);
    for variant in Variant::ALL {
        let model = Model::new(&micro_config(variant, 8), dims(&data), 10).unwrap();
        let (loss, grads) = model.loss_and_gradients(&b, LossWeights::default()).unwrap();
        assert!(loss.is_finite());
        for ((_, name, _), g) in model.params.iter().zip(&grads) {
            assert!(g.data().iter().any(|&x| x != 0.0), "{variant:?}: no gradient reaches {name}");
        }
    }
}

#[test]
fn variants_have_matching_parameter_counts() {
    let desk = RunConfig::desk().model;
    for cfg in [ModelConfig::default(), desk] {
        for n in [12, 40, 120] {
            // Ten percent of buses observed, five channels each.
            let d_in = 5 * ((n as f64 * 0.1).round() as usize).max(1);
            let d = Dims { d_in, n_buses: n };
            let count = |v| Model::new(&ModelConfig { variant: v, ..cfg.clone() }, d, 0).unwrap().num_params() as f64;
            let (dsse, mixer) = (count(Variant::MambaDsse), count(Variant::MambaMixer));
            let gap = (dsse - mixer).abs() / dsse.max(mixer);
            assert!(gap <= 0.10, "n={n}, d_model={}: {dsse} vs {mixer}", cfg.engine.d_model);
        }
    }
}

#[test]
fn mixer_with_identity_blocks_reads_only_the_final_frame() {
    let (_, data) = series(12, 11);
    let mut model = Model::new(&micro_config(Variant::MambaMixer, 7), dims(&data), 12).unwrap();
    model.zero_block_outputs();
    let b = batch(&data, 7, 2, 13);
    let base = model.predict(&b).unwrap();
    let mut noisy = b.clone();
    let earlier = 6 * 2 * data.d_in;
    let junk = uniform(&mut rng(14), &[earlier], -3.0, 3.0);
    noisy.frames.data_mut()[..earlier].copy_from_slice(junk.data());
    assert_eq!(model.predict(&noisy).unwrap(), base);
    noisy.frames.data_mut()[earlier] += 1.0;
    assert_ne!(model.predict(&noisy).unwrap(), base);
}

#[test]
fn loss_is_finite_at_initialization() {
    let desk = RunConfig::desk().model;
    let data = SeriesData::new(dataset_12(), &Normalizer::fit(dataset_12(), dataset_12().split.train_end).unwrap()).unwrap();
    for variant in Variant::ALL {
        for seed in 0..3 {
            let model = Model::new(&ModelConfig { variant, ..desk.clone() }, dims(&data), seed).unwrap();
            let loss = model.loss(&batch(&data, desk.window, 16, seed), LossWeights::default()).unwrap();
            assert!(loss.is_finite(), "{variant:?} seed {seed}: {loss}");
        }
    }
}

fn short_run(cfg: &TrainConfig, seed: u64) -> (Model, Vec<f64>) {
    let (ds, data) = series(12, 15);
    let mc = micro_config(Variant::MambaDsse, 6);
    let splits = window_splits(ds.split.train_end, ds.split.steps, mc.window, 0.1).unwrap();
    let model = Model::new(&mc, dims(&data), seed).unwrap();
    let trained = train(model, &data, &splits, cfg).unwrap();
    (trained.model, trained.curve.iter().map(|r| r.train_loss).collect())
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cfg = TrainConfig { lr: 0.0, total_steps: 5, batch_size: 4, validate_every: 0, seed: 3, ..TrainConfig::default() };
    let (model, _) = short_run(&cfg, 3);
    let (_, data) = series(12, 15);
    let fresh = Model::new(&micro_config(Variant::MambaDsse, 6), dims(&data), 3).unwrap();
    for ((_, name, a), (_, _, b)) in model.params.iter().zip(fresh.params.iter()) {
        assert_eq!(a, b, "{name} moved");
    }
}

#[test]
fn identical_seeds_give_identical_training_curves() {
    let cfg = TrainConfig { total_steps: 12, batch_size: 4, validate_every: 5, seed: 4, ..TrainConfig::default() };
    let (m1, c1) = short_run(&cfg, 4);
    let (m2, c2) = short_run(&cfg, 4);
    assert_eq!(c1, c2);
    for ((_, _, a), (_, _, b)) in m1.params.iter().zip(m2.params.iter()) {
        assert_eq!(a, b);
    }
    let (_, c3) = short_run(&TrainConfig { seed: 5, ..cfg }, 4);
    assert_ne!(c1, c3);
}

#[test]
fn loss_falls_over_the_first_fifty_steps() {
    let desk = RunConfig::desk().model;
    for seed in 1..=3 {
        let cfg = TrainConfig { total_steps: 50, seed, ..TrainConfig::default() };
        let curve = fit(dataset_12(), &desk, &cfg, seed).unwrap().curve;
        let mean = |r: &[mamba_dsse::train::LossRecord]| r.iter().map(|x| x.train_loss).sum::<f64>() / r.len() as f64;
        let (early, late) = (mean(&curve[..10]), mean(&curve[40..]));
        assert!(late < early, "seed {seed}: {early} → {late}");
    }
}

#[test]
fn training_loss_at_step_500_is_below_step_10() {
    for (seed, run) in trained_12().iter().enumerate() {
        let (at10, at500) = (run.curve[10].train_loss, run.curve[500].train_loss);
        assert!(at500 < at10, "seed {}: {at10} → {at500}", seed + 1);
    }
}

/// Mean |x̄ − μ⁻| / √(P⁻ + R) and mean |x̄ − μ⁻| over steps after the first.
fn innovation_stats(model: &Model, data: &SeriesData, ends: &[usize]) -> (f64, f64) {
    let b = data.batch(ends, model.config.window).unwrap();
    let tape = Tape::new();
    let p = model.params.bind_frozen(&tape);
    let out = model.forward(&p, &tape, &b, None).unwrap();
    let trace = out.trace.unwrap();
    let r = out.measurement_noise.unwrap().value().as_ref().clone();
    let lifted = out.lifted.value().as_ref().clone();
    let (bs, dl) = (b.batch, model.d_lift());
    let (mut z, mut e, mut count) = (0.0, 0.0, 0usize);
    for t in 1..b.window {
        let mean = trace.priors[t].mean.value();
        let var = trace.priors[t].var.value();
        for i in 0..bs * dl {
            let resid = lifted.data()[t * bs * dl + i] - mean.data()[i];
            z += resid.abs() / (var.data()[i] + r.data()[i % dl]).sqrt();
            e += resid.abs();
            count += 1;
        }
    }
    (z / count as f64, e / count as f64)
}

#[test]
fn trained_filter_innovations_are_calibrated() {
    let run = &trained_12()[0];
    let ends = subsample(&run.splits.test, 128);
    let (z, _) = innovation_stats(&run.model, &run.data, &ends);
    assert!((0.5..=2.0).contains(&z), "mean |standardized innovation| {z}");
}

#[test]
fn training_makes_lifted_dynamics_more_linear() {
    let run = &trained_12()[0];
    let ends = subsample(&run.splits.test, 128);
    let (_, trained) = innovation_stats(&run.model, &run.data, &ends);
    let fresh = Model::new(&run.model.config, run.model.dims, 1).unwrap();
    let (_, untrained) = innovation_stats(&fresh, &run.data, &ends);
    assert!(trained * 2.0 <= untrained, "one-step lifted error {trained} vs untrained {untrained}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (ds, data) = series(12, 16);
    let cfg = TrainConfig { total_steps: 3, batch_size: 4, validate_every: 0, ..TrainConfig::default() };
    let mc = micro_config(Variant::MambaMixer, 5);
    let splits = window_splits(ds.split.train_end, ds.split.steps, mc.window, 0.1).unwrap();
    let trained = train(Model::new(&mc, dims(&data), 2).unwrap(), &data, &splits, &cfg).unwrap();
    let meta = CheckpointMeta {
        model: mc.clone(),
        dims: dims(&data),
        normalizer: data.normalizer.clone(),
        train: cfg,
        dataset: ds.config.clone(),
        data_seed: 16,
        observed: data.observed.clone(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &trained.model, Some(&trained.adam), &meta).unwrap();
    let (loaded, meta2) = load_checkpoint(&path).unwrap();
    assert_eq!(meta2.observed, meta.observed);
    assert_eq!(meta2.normalizer, meta.normalizer);
    let b = batch(&data, 5, 6, 17);
    assert_eq!(loaded.predict(&b).unwrap(), trained.model.predict(&b).unwrap());
}
