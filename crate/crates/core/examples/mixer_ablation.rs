//! Filter model against the backbone-only mixer on the same data, seeds
//! and training budget.
//!
//! cargo run -p mamba-dsse --example mixer_ablation

use mamba_dsse::experiments::{run_experiment, ExperimentKind, ExperimentOutput};
use mamba_dsse::RunConfig;

fn main() -> mamba_dsse::Result<()> {
    let mut config = RunConfig::desk();
    config.experiment.sizes = vec![12];
    config.experiment.seeds = vec![1, 2];
    let ExperimentOutput::Accuracy { rows, summary } = run_experiment(ExperimentKind::Scalability, &config)? else {
        unreachable!("accuracy experiment");
    };
    for r in &rows {
        match r.mae {
            Some(mae) => println!("{:5} seed {}  MAE {mae:.5}  vm MAE {:.5}", r.variant, r.seed, r.vm_mae.unwrap_or(f64::NAN)),
            None => println!("{:5} seed {}  failed: {}", r.variant, r.seed, r.error.as_deref().unwrap_or("")),
        }
    }
    for s in &summary {
        println!("{:5} mean MAE {:.5} over {} seeds", s.variant, s.mae_mean.unwrap_or(f64::NAN), s.ok);
    }
    Ok(())
}
