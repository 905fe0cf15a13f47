#![allow(dead_code)]

use dsse_autodiff::gradcheck::{flatten, gradients, unflatten, value};
use dsse_autodiff::{AdError, Tape, Tensor, Var};
use dsse_oracles::finite_diff::{central, relative_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Core results inside a gradcheck closure.
pub fn ad<T>(r: mamba_dsse::Result<T>) -> dsse_autodiff::Result<T> {
    r.map_err(|e| AdError::Invalid(e.to_string()))
}

/// Scalar projection with fixed random weights.
pub fn weighted<'t>(tape: &'t Tape, out: Var<'t>, seed: u64) -> dsse_autodiff::Result<Var<'t>> {
    let mut r = rng(seed);
    let w = Tensor::from_fn(&out.shape(), |_| r.random_range(-1.0..1.0));
    out.mul(tape.constant(w))?.sum()
}

/// Norm-wise relative error between tape gradients and central differences.
pub fn gradient_error<F>(inputs: &[Tensor], f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> dsse_autodiff::Result<Var<'t>> + Copy,
{
    let (_, analytic) = gradients(inputs, f).expect("analytic gradients");
    let numeric = central(&flatten(inputs), FD_STEP, |x| value(&unflatten(inputs, x), f).expect("value"));
    relative_error(&flatten(&analytic), &numeric)
}

/// Norm-wise relative error between tape gradients of `f` with respect to
/// every parameter in `params` and central differences.
pub fn store_gradient_error<F>(params: &dsse_autodiff::ParamStore, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &dsse_autodiff::Bound<'t>) -> dsse_autodiff::Result<Var<'t>>,
{
    let tape = Tape::new();
    let p = params.bind(&tape);
    let out = f(&tape, &p).expect("forward");
    let grads = tape.backward(out).expect("backward");
    let analytic = p.gradients(&grads);
    let templates: Vec<Tensor> = params.iter().map(|(_, _, t)| t.clone()).collect();
    let ids: Vec<_> = params.ids().collect();
    let numeric = central(&flatten(&templates), FD_STEP, |x| {
        let mut probe = params.clone();
        for (id, t) in ids.iter().zip(unflatten(&templates, x)) {
            probe.set(*id, t).expect("same shape");
        }
        let tape = Tape::new();
        let p = probe.bind_frozen(&tape);
        f(&tape, &p).expect("forward").item()
    });
    relative_error(&flatten(&analytic), &numeric)
}
