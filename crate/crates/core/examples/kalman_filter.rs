//! Diagonal Kalman filter tracking a noisy two-channel random walk.
//!
//! cargo run -p mamba-dsse --example kalman_filter

use mamba_dsse::filter::{filter_sequence, GaussianBelief, StepMatrices};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> mamba_dsse::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (steps, q, r) = (200, 0.01f64, 0.25f64);
    let drift = Normal::new(0.0, q.sqrt()).unwrap();
    let noise = Normal::new(0.0, r.sqrt()).unwrap();

    let mut state = vec![0.0, 1.0];
    let (mut truth, mut observed) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        for s in &mut state {
            *s += drift.sample(&mut rng);
        }
        truth.push(state.clone());
        observed.push(state.iter().map(|s| s + noise.sample(&mut rng)).collect::<Vec<_>>());
    }

    // Random walk: the prior mean is the posterior mean, so the control
    // weight on the observation is zero.
    let step = StepMatrices { a: vec![1.0; 2], b: vec![0.0; 2], q: vec![q; 2] };
    let init = GaussianBelief { mean: vec![0.0; 2], var: vec![1.0; 2] };
    let traj = filter_sequence(&observed, &vec![step; steps], &[r; 2], &init, None)?;

    let mse = |est: &dyn Fn(usize) -> Vec<f64>| {
        (0..steps).map(|t| est(t).iter().zip(&truth[t]).map(|(e, x)| (e - x).powi(2)).sum::<f64>()).sum::<f64>()
            / (2 * steps) as f64
    };
    println!("raw measurement MSE {:.4}", mse(&|t| observed[t].clone()));
    println!("filtered MSE        {:.4}", mse(&|t| traj.posteriors[t].mean.clone()));
    println!("steady-state posterior variance {:.4}", traj.posteriors[steps - 1].var[0]);
    Ok(())
}
