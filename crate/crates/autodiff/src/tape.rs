//! Define-by-run reverse-mode tape.
//!
//! Every operation appends a node holding its output value. Nodes whose
//! inputs are all constants are stored without a backward rule. `backward`
//! walks the nodes once, in reverse recording order, so inputs always
//! precede their consumers.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{AdError, Result};
use crate::tensor::{gemm, Tensor};

/// Backward rule for an operation implemented outside this crate.
///
/// The caller computes the forward value itself and hands it to
/// [`Tape::custom`]; saved intermediates live in the implementing struct.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Vector-Jacobian product: one optional gradient per input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    MatMul(usize, usize),
    Exp(usize),
    Softplus(usize),
    Tanh(usize),
    Sigmoid(usize),
    Square(usize),
    Sqrt(usize),
    Ln(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Sum(usize),
    Mean(usize),
    SumAxis { input: usize, axis: usize },
    Broadcast(usize),
    Custom { inputs: Vec<usize>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Split a shape around `axis` into (outer, axis length, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable input (parameter or probe point).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'_> {
        self.constant(Tensor::zeros(shape))
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn check(&self, vars: &[Var<'_>]) {
        for v in vars {
            assert!(std::ptr::eq(v.tape, self), "Var used with a different tape");
        }
    }

    /// Record an externally computed operation with a custom backward rule.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        output: Tensor,
        op: Box<dyn CustomOp>,
    ) -> Result<Var<'t>> {
        self.check(inputs);
        output.ensure_finite(op.name())?;
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let rg = ids.iter().any(|&i| self.requires_grad(i));
        Ok(self.push(output, Op::Custom { inputs: ids, op }, rg))
    }

    pub fn concat<'t>(&'t self, vars: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        self.check(vars);
        let first = vars.first().ok_or_else(|| AdError::Invalid("concat: no inputs".into()))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(AdError::InvalidShape {
                op: "concat",
                shape: base,
                reason: format!("axis {axis} out of range"),
            });
        }
        let values: Vec<Rc<Tensor>> = vars.iter().map(|v| v.value()).collect();
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(AdError::ShapeMismatch { op: "concat", lhs: base, rhs: s.to_vec() });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(shape, data)?;
        let ids: Vec<usize> = vars.iter().map(|v| v.id).collect();
        let rg = ids.iter().any(|&i| self.requires_grad(i));
        Ok(self.push(out, Op::Concat { inputs: ids, axis }, rg))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        self.check(&[loss]);
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.len() != 1 {
            return Err(AdError::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(Tensor::ones(&loss_shape));
        }

        let accumulate = |grads: &mut Vec<Option<Tensor>>, id: usize, g: Tensor| {
            if !nodes[id].requires_grad {
                return;
            }
            match &mut grads[id] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let out = &node.value;
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*b), |g, y| g * y));
                    accumulate(&mut grads, *b, g.zip_map(val(*a), |g, x| g * x));
                }
                Op::Div(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    accumulate(&mut grads, *a, g.zip_map(y, |g, y| g / y));
                    let gb: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .zip(y.data())
                        .map(|((g, x), y)| -g * x / (y * y))
                        .collect();
                    accumulate(&mut grads, *b, Tensor::new(y.shape().to_vec(), gb)?);
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    let (m, k) = (x.shape()[0], x.shape()[1]);
                    let n = y.shape()[1];
                    if nodes[*a].requires_grad {
                        let mut ga = vec![0.0; m * k];
                        gemm(g.data(), false, y.data(), true, m, n, k, &mut ga, false);
                        accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    }
                    if nodes[*b].requires_grad {
                        let mut gb = vec![0.0; k * n];
                        gemm(x.data(), true, g.data(), false, k, m, n, &mut gb, false);
                        accumulate(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g.zip_map(out, |g, y| g * y)),
                Op::Softplus(a) => {
                    accumulate(&mut grads, *a, g.zip_map(val(*a), |g, x| g * sigmoid(x)))
                }
                Op::Tanh(a) => accumulate(&mut grads, *a, g.zip_map(out, |g, y| g * (1.0 - y * y))),
                Op::Sigmoid(a) => {
                    accumulate(&mut grads, *a, g.zip_map(out, |g, y| g * y * (1.0 - y)))
                }
                Op::Square(a) => accumulate(&mut grads, *a, g.zip_map(val(*a), |g, x| 2.0 * g * x)),
                Op::Sqrt(a) => accumulate(&mut grads, *a, g.zip_map(out, |g, y| 0.5 * g / y)),
                Op::Ln(a) => accumulate(&mut grads, *a, g.zip_map(val(*a), |g, x| g / x)),
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|g| g * c)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Concat { inputs, axis } => {
                    let (outer, _, inner) = split_axis(out.shape(), *axis);
                    let total = out.shape()[*axis] * inner;
                    let mut offset = 0;
                    for &i in inputs {
                        let shape = val(i).shape().to_vec();
                        let chunk = shape[*axis] * inner;
                        if nodes[i].requires_grad {
                            let mut gi = Vec::with_capacity(outer * chunk);
                            for o in 0..outer {
                                let start = o * total + offset;
                                gi.extend_from_slice(&g.data()[start..start + chunk]);
                            }
                            accumulate(&mut grads, i, Tensor::new(shape, gi)?);
                        }
                        offset += chunk;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let shape = val(*input).shape().to_vec();
                    let (outer, full, inner) = split_axis(&shape, *axis);
                    let len = out.shape()[*axis];
                    let mut gi = vec![0.0; outer * full * inner];
                    for o in 0..outer {
                        let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                        let dst = o * full * inner + start * inner;
                        gi[dst..dst + len * inner].copy_from_slice(src);
                    }
                    accumulate(&mut grads, *input, Tensor::new(shape, gi)?);
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    accumulate(&mut grads, *a, Tensor::full(val(*a).shape(), gv));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let gv = g.item() / x.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(x.shape(), gv));
                }
                Op::SumAxis { input, axis } => {
                    let shape = val(*input).shape().to_vec();
                    let (outer, len, inner) = split_axis(&shape, *axis);
                    let mut gi = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        for l in 0..len {
                            let dst = (o * len + l) * inner;
                            gi[dst..dst + inner].copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::new(shape, gi)?);
                }
                Op::Broadcast(a) => {
                    let shape = val(*a).shape().to_vec();
                    let inner: usize = shape.iter().product();
                    let mut gi = vec![0.0; inner];
                    for chunk in g.data().chunks(inner) {
                        for (d, s) in gi.iter_mut().zip(chunk) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(shape, gi)?);
                }
                Op::Custom { inputs, op } => {
                    let ins: Vec<&Tensor> = inputs.iter().map(|&i| val(i).as_ref()).collect();
                    let gs = op.backward(&ins, out, &g);
                    debug_assert_eq!(gs.len(), inputs.len(), "{}: gradient count", op.name());
                    for (&i, gi) in inputs.iter().zip(gs) {
                        if let Some(gi) = gi {
                            debug_assert_eq!(gi.shape(), val(i).shape(), "{}: gradient shape", op.name());
                            accumulate(&mut grads, i, gi);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Tape::backward`]: gradients of the loss for every leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`; zeros when unreachable from the loss.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: &'static str, f: impl Fn(f64) -> f64, make: impl FnOnce(usize) -> Op) -> Result<Self> {
        let out = self.value().map(f);
        out.ensure_finite(op)?;
        Ok(self.tape.push(out, make(self.id), self.requires_grad()))
    }

    fn binary(
        self,
        other: Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Self> {
        self.tape.check(&[other]);
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(AdError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() });
        }
        let out = a.zip_map(&b, f);
        out.ensure_finite(op)?;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(out, make(self.id, other.id), rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Self> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Self> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Self> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul)
    }

    /// Elementwise division.
    pub fn div(self, other: Var<'t>) -> Result<Self> {
        self.binary(other, "div", |a, b| a / b, Op::Div)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Self> {
        self.tape.check(&[other]);
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![0.0; m * n];
        gemm(a.data(), false, b.data(), false, m, k, n, &mut c, false);
        let out = Tensor::new(vec![m, n], c)?;
        out.ensure_finite("matmul")?;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id), rg))
    }

    pub fn exp(self) -> Result<Self> {
        self.unary("exp", f64::exp, Op::Exp)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(self) -> Result<Self> {
        self.unary("softplus", softplus, Op::Softplus)
    }

    pub fn tanh(self) -> Result<Self> {
        self.unary("tanh", f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(self) -> Result<Self> {
        self.unary("sigmoid", sigmoid, Op::Sigmoid)
    }

    pub fn square(self) -> Result<Self> {
        self.unary("square", |x| x * x, Op::Square)
    }

    pub fn sqrt(self) -> Result<Self> {
        if self.value().data().iter().any(|&x| x < 0.0) {
            return Err(AdError::Invalid("sqrt: negative input".into()));
        }
        self.unary("sqrt", f64::sqrt, Op::Sqrt)
    }

    /// Natural logarithm; inputs must be positive.
    pub fn ln(self) -> Result<Self> {
        if self.value().data().iter().any(|&x| !(x > 0.0)) {
            return Err(AdError::Invalid("ln: non-positive input".into()));
        }
        self.unary("ln", f64::ln, Op::Ln)
    }

    /// Multiply by a constant.
    pub fn scale(self, c: f64) -> Result<Self> {
        self.unary("scale", |x| x * c, |a| Op::Scale(a, c))
    }

    pub fn neg(self) -> Result<Self> {
        self.scale(-1.0)
    }

    /// Add a constant.
    pub fn add_scalar(self, c: f64) -> Result<Self> {
        self.unary("add_scalar", |x| x + c, Op::AddScalar)
    }

    /// `x · sigmoid(x)`.
    pub fn silu(self) -> Result<Self> {
        self.mul(self.sigmoid()?)
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(AdError::InvalidShape {
                op: "slice",
                shape,
                reason: format!("axis {axis}, range {start}..{}", start + len),
            });
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let src = o * full * inner + start * inner;
            data.extend_from_slice(&x.data()[src..src + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.tape.push(out, Op::Slice { input: self.id, axis, start }, self.requires_grad()))
    }

    /// Sum of all entries (scalar result).
    pub fn sum(self) -> Result<Self> {
        let out = Tensor::scalar(self.value().sum());
        out.ensure_finite("sum")?;
        Ok(self.tape.push(out, Op::Sum(self.id), self.requires_grad()))
    }

    /// Mean of all entries (scalar result).
    pub fn mean(self) -> Result<Self> {
        let x = self.value();
        if x.is_empty() {
            return Err(AdError::InvalidShape { op: "mean", shape: x.shape().to_vec(), reason: "empty".into() });
        }
        let out = Tensor::scalar(x.sum() / x.len() as f64);
        out.ensure_finite("mean")?;
        Ok(self.tape.push(out, Op::Mean(self.id), self.requires_grad()))
    }

    /// Sum over `axis`, removing it from the shape.
    pub fn sum_axis(self, axis: usize) -> Result<Self> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() {
            return Err(AdError::InvalidShape { op: "sum_axis", shape, reason: format!("axis {axis}") });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = (o * len + l) * inner;
                for i in 0..inner {
                    data[o * inner + i] += x.data()[src + i];
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let out = Tensor::new(out_shape, data)?;
        out.ensure_finite("sum_axis")?;
        Ok(self.tape.push(out, Op::SumAxis { input: self.id, axis }, self.requires_grad()))
    }

    /// Mean over `axis`, removing it from the shape.
    pub fn mean_axis(self, axis: usize) -> Result<Self> {
        let len = self.shape().get(axis).copied().unwrap_or(1).max(1);
        self.sum_axis(axis)?.scale(1.0 / len as f64)
    }

    /// Repeat along new leading dimensions: the input shape must equal the
    /// trailing dimensions of `target` (a scalar broadcasts to anything).
    pub fn broadcast(self, target: &[usize]) -> Result<Self> {
        let x = self.value();
        let shape = x.shape();
        let fits = shape.len() <= target.len() && target[target.len() - shape.len()..] == *shape;
        if !fits {
            return Err(AdError::ShapeMismatch { op: "broadcast", lhs: shape.to_vec(), rhs: target.to_vec() });
        }
        let reps: usize = target[..target.len() - shape.len()].iter().product();
        let mut data = Vec::with_capacity(reps * x.len());
        for _ in 0..reps {
            data.extend_from_slice(x.data());
        }
        let out = Tensor::new(target.to_vec(), data)?;
        Ok(self.tape.push(out, Op::Broadcast(self.id), self.requires_grad()))
    }

    /// `self + row` with `row` repeated over the leading dimensions.
    pub fn add_row(self, row: Var<'t>) -> Result<Self> {
        let target = self.shape();
        self.add(row.broadcast(&target)?)
    }

    /// `self ⊙ row` with `row` repeated over the leading dimensions.
    pub fn mul_row(self, row: Var<'t>) -> Result<Self> {
        let target = self.shape();
        self.mul(row.broadcast(&target)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_rule() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let loss = x.square().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn softplus_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = x.softplus().unwrap();
        assert!((y.item() - std::f64::consts::LN_2).abs() < 1e-15);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 0.5);
    }

    #[test]
    fn exp_values() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        let y = x.exp().unwrap().value();
        assert_eq!(y.data()[0], 1.0);
        assert!((y.data()[1] - 2.718_281_8).abs() < 1e-7);
    }

    #[test]
    fn two_consumers_accumulate() {
        // loss = x·y + x², dloss/dx = y + 2x
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.leaf(Tensor::scalar(5.0));
        let loss = x.mul(y).unwrap().add(x.square().unwrap()).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).item(), 9.0);
        assert_eq!(g.wrt(y).item(), 2.0);
    }

    #[test]
    fn unreachable_leaf_is_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn errors_name_op_and_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        let err = a.add(b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
        assert!(a.matmul(a).is_err());
        let big = tape.constant(Tensor::scalar(800.0));
        assert!(matches!(big.exp(), Err(AdError::NonFinite { op: "exp" })));
        let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(v), Err(AdError::NonScalarLoss(_))));
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::new();
        let m = Tensor::from_fn(&[3, 3], |i| i as f64 * 0.5 - 1.0);
        let eye = tape.constant(Tensor::identity(3));
        let y = eye.matmul(tape.constant(m.clone())).unwrap();
        assert_eq!(*y.value(), m);
    }

    #[test]
    fn constants_are_not_recorded_as_ops() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1.0));
        let b = a.exp().unwrap();
        assert!(!b.requires_grad());
    }
}
