//! Reverse-mode gradients of a small two-layer network, checked against
//! central differences.
//!
//! cargo run -p dsse-autodiff --example gradient_check

use dsse_autodiff::gradcheck::{flatten, gradients, unflatten, value};
use dsse_autodiff::{Result, Tape, Tensor, Var};

fn net<'t>(tape: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>> {
    let (x, w1, w2) = (v[0], v[1], v[2]);
    let h = x.matmul(w1)?.tanh()?;
    let y = h.matmul(w2)?.softplus()?;
    y.sub(tape.scalar(0.5).broadcast(&y.shape())?)?.square()?.mean()
}

fn main() -> Result<()> {
    let x = Tensor::from_fn(&[4, 3], |i| (i as f64 * 0.37).sin());
    let w1 = Tensor::from_fn(&[3, 5], |i| (i as f64 * 0.91).cos() * 0.5);
    let w2 = Tensor::from_fn(&[5, 2], |i| (i as f64 * 1.3).sin() * 0.5);
    let inputs = [x, w1, w2];

    let (loss, grads) = gradients(&inputs, net)?;
    let analytic = flatten(&grads);

    let h = 1e-6;
    let base = flatten(&inputs);
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut probe = base.clone();
        probe[i] += h;
        let up = value(&unflatten(&inputs, &probe), net)?;
        probe[i] -= 2.0 * h;
        let down = value(&unflatten(&inputs, &probe), net)?;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - analytic[i]).abs());
    }
    println!("loss {loss:.6}, {} gradient entries", analytic.len());
    println!("max |tape - finite difference| = {worst:.2e}");
    Ok(())
}
