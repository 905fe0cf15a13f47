//! A time-invariant state-space layer evaluated two ways: the sequential
//! scan and a causal convolution with its materialized kernel.
//!
//! cargo run -p mamba-dsse --example scan_vs_convolution

use dsse_autodiff::Tensor;
use mamba_dsse::ssm::{conv_apply, kernel_materialize, realize_dynamics, selective_scan, zoh_discretize};

fn main() -> mamba_dsse::Result<()> {
    let (l, d, n) = (48, 3, 4);
    let a: Vec<f64> = (0..d * n).map(|i| realize_dynamics(i as f64 * 0.4 - 1.0)).collect();
    let b: Vec<f64> = (0..d * n).map(|i| (i as f64 * 0.7).sin()).collect();
    let c = Tensor::from_fn(&[d, n], |i| (i as f64 * 1.1).cos());
    let pair = zoh_discretize(&a, &b, 0.1)?;
    let a_bar = Tensor::new(vec![d, n], pair.a_bar)?;
    let b_bar = Tensor::new(vec![d, n], pair.b_bar)?;
    let u = Tensor::from_fn(&[l, d], |i| ((i / d) as f64 * 0.3).sin());

    let over_time = |t: &Tensor| Tensor::new(vec![l, d, n], t.data().repeat(l));
    let scan = selective_scan(&u, &over_time(&a_bar)?, &over_time(&b_bar)?, &over_time(&c)?, &Tensor::zeros(&[d]), &Tensor::zeros(&[d, n]))?;
    let kernel = kernel_materialize(&a_bar, &b_bar, &c, l)?;
    let conv = conv_apply(&kernel, &u)?;

    let worst = scan.y.data().iter().zip(conv.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("L={l} D={d} N={n}: max |scan - conv| = {worst:.2e}");
    for t in [0, 1, 2, l - 1] {
        println!("y[{t:2}] = {:?}", &scan.y.data()[t * d..(t + 1) * d]);
    }
    Ok(())
}
