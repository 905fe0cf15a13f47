//! Helpers that evaluate a tape-built scalar function on plain inputs, so
//! tests can compare analytic gradients with an external numeric oracle.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Value of `f` at `inputs`, without gradients.
pub fn value<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    Ok(f(&tape, &vars)?.item())
}

/// Value of `f` and its gradient with respect to every input.
pub fn gradients<F>(inputs: &[Tensor], f: F) -> Result<(f64, Vec<Tensor>)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok((out.item(), vars.iter().map(|&v| grads.wrt(v)).collect()))
}

/// Rebuild input tensors from one flat vector (inverse of concatenating
/// their data in order).
pub fn unflatten(templates: &[Tensor], flat: &[f64]) -> Vec<Tensor> {
    let mut offset = 0;
    templates
        .iter()
        .map(|t| {
            let n = t.len();
            let out = Tensor::new(t.shape().to_vec(), flat[offset..offset + n].to_vec())
                .expect("template shape");
            offset += n;
            out
        })
        .collect()
}

pub fn flatten(tensors: &[Tensor]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
}
