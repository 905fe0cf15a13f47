//! Dense `f64` tensors, a define-by-run reverse-mode tape, and Adam.
//!
//! A training step builds a fresh [`Tape`], binds the [`ParamStore`] onto
//! it, runs the forward computation through [`Var`] operations, and calls
//! [`Tape::backward`] on the scalar loss:
//!
//! ```
//! use dsse_autodiff::{ParamStore, Tape, Tensor};
//!
//! let mut params = ParamStore::new();
//! let w = params.add("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
//!
//! let tape = Tape::new();
//! let bound = params.bind(&tape);
//! let loss = bound.get(w).square().unwrap().sum().unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(bound.get(w)).data(), &[2.0, -4.0]);
//! ```

pub mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{AdError, Result};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;

/// `ln(1 + eˣ)` on plain values, matching [`Var::softplus`].
pub fn softplus(x: f64) -> f64 {
    tape::softplus(x)
}

pub fn sigmoid(x: f64) -> f64 {
    tape::sigmoid(x)
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}
