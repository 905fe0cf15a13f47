mod common;

use common::{ad, rng, store_gradient_error, uniform, weighted};
use dsse_autodiff::{ParamStore, Tape, Tensor};
use dsse_feeder::{Dataset, DatasetConfig};
use mamba_dsse::data::{Normalizer, SeriesData};
use mamba_dsse::koopman::{koopman_loss, Koopman, LiftConfig, LossWeights};
use mamba_dsse::nn::{Activation, Mlp};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn lift_config(d_in: usize, rho: f64) -> LiftConfig {
    LiftConfig { d_in, rho, hidden: 6 }
}

fn loss_value(pred: &Tensor, next: &Tensor, rec: &Tensor, now: &Tensor, w: LossWeights) -> f64 {
    let tape = Tape::new();
    let c = |t: &Tensor| tape.constant(t.clone());
    koopman_loss(c(pred), c(next), c(rec), c(now), w).unwrap().item()
}

fn mean_square(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

#[test]
fn lifted_width_follows_the_expansion_factor() {
    let mut params = ParamStore::new();
    let k = Koopman::new(&mut params, &lift_config(10, 2.0), 4, &mut rng(1)).unwrap();
    assert_eq!(k.d_lift(), 20);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let out = k.lift(&p, tape.constant(uniform(&mut rng(2), &[3, 10], -1.0, 1.0))).unwrap();
    assert_eq!(out.shape(), vec![3, 20]);
    assert_eq!(lift_config(7, 1.5).d_lift(), 11);
    assert!(LiftConfig { rho: 2.5, ..lift_config(4, 2.0) }.validate().is_err());
    assert!(k.lift(&p, tape.constant(Tensor::zeros(&[3, 9]))).is_err());
}

#[test]
fn zero_input_lifts_to_the_final_bias() {
    let mut params = ParamStore::new();
    let k = Koopman::new(&mut params, &lift_config(5, 1.5), 4, &mut rng(3)).unwrap();
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let out = k.lift(&p, tape.constant(Tensor::zeros(&[1, 5]))).unwrap();
    let bias = params.get(k.encoder.layers.last().unwrap().bias.unwrap());
    assert_eq!(out.value().data(), bias.data());
}

#[test]
fn lift_and_reconstruct_are_deterministic() {
    let mut params = ParamStore::new();
    let k = Koopman::new(&mut params, &lift_config(5, 1.5), 4, &mut rng(4)).unwrap();
    let x = uniform(&mut rng(5), &[4, 5], -1.0, 1.0);
    let run = || {
        let tape = Tape::new();
        let p = params.bind_frozen(&tape);
        let lifted = k.lift(&p, tape.constant(x.clone())).unwrap();
        let var = tape.constant(Tensor::full(&lifted.shape(), 0.3));
        let out = k.reconstruct(&p, lifted, var).unwrap();
        assert_eq!(out.shape(), vec![4, 4]);
        (lifted.value().as_ref().clone(), out.value().as_ref().clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn negative_variance_is_rejected() {
    let mut params = ParamStore::new();
    let k = Koopman::new(&mut params, &lift_config(2, 1.5), 4, &mut rng(6)).unwrap();
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let mean = tape.constant(Tensor::zeros(&[1, 3]));
    let var = tape.constant(Tensor::new(vec![1, 3], vec![0.1, -1e-9, 0.2]).unwrap());
    assert!(k.reconstruct(&p, mean, var).is_err());
}

#[test]
fn loss_examples() {
    let mut r = rng(7);
    let x = uniform(&mut r, &[6, 4], -1.0, 1.0);
    let next = uniform(&mut r, &[6, 4], -1.0, 1.0);
    let off = uniform(&mut r, &[6, 4], -1.0, 1.0);
    assert_eq!(loss_value(&next, &next, &x, &x, LossWeights::default()), 0.0);

    let pure = LossWeights { lambda_pred: 1.0, lambda_rec: 0.0, lambda_lin: 0.0 };
    let expected = mean_square(&off, &next);
    assert!((loss_value(&off, &next, &off, &x, pure) - expected).abs() < 1e-15);

    let w = LossWeights { lambda_pred: 0.7, lambda_rec: 0.3, lambda_lin: 0.0 };
    let expected = 0.7 * mean_square(&off, &next) + 0.3 * mean_square(&next, &x);
    assert!((loss_value(&off, &next, &next, &x, w) - expected).abs() < 1e-15);
}

#[test]
fn mean_predictor_scores_the_target_variance() {
    let ds = Dataset::generate(&DatasetConfig { n_buses: 12, ..DatasetConfig::default() }, 3).unwrap();
    let norm = Normalizer::fit(&ds, ds.split.train_end).unwrap();
    let data = SeriesData::new(&ds, &norm).unwrap();
    let ends: Vec<usize> = (0..data.steps).step_by(7).collect();
    let targets = data.batch(&ends, 1).unwrap().targets;
    let (rows, d) = (targets.shape()[0], targets.shape()[1]);

    // Two-pass population variance per channel, averaged over channels.
    let mut means = vec![0.0; d];
    let mut variance = 0.0;
    for c in 0..d {
        let col: Vec<f64> = (0..rows).map(|r| targets.data()[r * d + c]).collect();
        means[c] = col.iter().sum::<f64>() / rows as f64;
        variance += col.iter().map(|v| (v - means[c]).powi(2)).sum::<f64>() / rows as f64 / d as f64;
    }
    let constant = Tensor::from_fn(&[rows, d], |i| means[i % d]);
    let pure = LossWeights { lambda_pred: 1.0, lambda_rec: 0.0, lambda_lin: 0.0 };
    let loss = loss_value(&constant, &targets, &targets, &targets, pure);
    assert!((loss - variance).abs() < 1e-12 * variance.max(1.0), "{loss} vs {variance}");
    assert!(variance > 0.1);
}

/// One linear encoder layer and a decoder holding its pseudo-inverse.
fn linear_pair(d: usize, seed: u64) -> (Koopman, ParamStore, DMatrix<f64>) {
    let cfg = LiftConfig { d_in: d, rho: 2.0, hidden: 1 };
    let dl = cfg.d_lift();
    let mut params = ParamStore::new();
    let mut r = rng(seed);
    let encoder = Mlp::new(&mut params, "enc", &[d, dl], Activation::Identity, &mut r).unwrap();
    let decoder = Mlp::new(&mut params, "dec", &[2 * dl, d], Activation::Identity, &mut r).unwrap();
    let w = uniform(&mut r, &[d, dl], -1.0, 1.0);
    let wm = DMatrix::from_row_slice(d, dl, w.data());
    let pinv = wm.clone().pseudo_inverse(1e-12).unwrap();
    let mut dec = Tensor::zeros(&[2 * dl, d]);
    for i in 0..dl {
        for j in 0..d {
            dec.data_mut()[i * d + j] = pinv[(i, j)];
        }
    }
    params.set(encoder.layers[0].weight, w).unwrap();
    params.set(decoder.layers[0].weight, dec).unwrap();
    (Koopman { config: cfg, encoder, decoder }, params, wm)
}

fn reconstruction_term(k: &Koopman, params: &ParamStore, x: &Tensor) -> f64 {
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let xs = tape.constant(x.clone());
    let rec = k.reconstruct_lifted(&p, k.lift(&p, xs).unwrap()).unwrap();
    let w = LossWeights { lambda_pred: 0.0, lambda_rec: 1.0, lambda_lin: 0.0 };
    koopman_loss(xs, xs, rec, xs, w).unwrap().item()
}

#[test]
fn pseudo_inverse_pair_reconstructs_exactly() {
    let (k, mut params, _) = linear_pair(4, 8);
    let x = uniform(&mut rng(9), &[10, 4], -2.0, 2.0);
    assert!(reconstruction_term(&k, &params, &x) < 1e-26);
    // Any perturbation of the decoder breaks the identity.
    let id = k.decoder.layers[0].weight;
    params.get_mut(id).data_mut()[5] += 1e-3;
    assert!(reconstruction_term(&k, &params, &x) > 1e-9);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut params = ParamStore::new();
    let k = Koopman::new(&mut params, &lift_config(3, 2.0), 4, &mut rng(10)).unwrap();
    let x = uniform(&mut rng(11), &[5, 3], -1.0, 1.0);
    let now = uniform(&mut rng(12), &[5, 4], -1.0, 1.0);
    let next = uniform(&mut rng(13), &[5, 4], -1.0, 1.0);
    let var = uniform(&mut rng(14), &[5, 6], 0.0, 0.5);
    let err = store_gradient_error(&params, |t, p| {
        let lifted = ad(k.lift(p, t.constant(x.clone())))?;
        let pred = ad(k.reconstruct(p, lifted.scale(0.8)?, t.constant(var.clone())))?;
        let rec = ad(k.reconstruct_lifted(p, lifted))?;
        let loss = ad(koopman_loss(pred, t.constant(next.clone()), rec, t.constant(now.clone()), LossWeights::default()))?;
        loss.add(weighted(t, lifted, 15)?.scale(1e-2)?)
    });
    assert!(err < 1e-5, "koopman gradients: {err:e}");
}

proptest! {
    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), lp in 0.0f64..3.0, lr in 0.0f64..3.0) {
        let mut r = rng(seed);
        let t: Vec<Tensor> = (0..4).map(|_| uniform(&mut r, &[3, 2], -5.0, 5.0)).collect();
        let w = LossWeights { lambda_pred: lp, lambda_rec: lr, lambda_lin: 0.0 };
        prop_assert!(loss_value(&t[0], &t[1], &t[2], &t[3], w) >= 0.0);
    }
}
