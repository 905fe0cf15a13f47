//! Train the filter model on a simulated feeder and compare it with the
//! persistence and mean-state baselines on the held-out days.
//!
//! cargo run -p mamba-dsse --example train_dsse -- 12

use dsse_feeder::Dataset;
use mamba_dsse::data::subsample;
use mamba_dsse::experiments::fit;
use mamba_dsse::train::{baselines, evaluate};
use mamba_dsse::RunConfig;

fn main() -> mamba_dsse::Result<()> {
    let mut config = RunConfig::desk();
    config.dataset.n_buses = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12);
    let dataset = Dataset::generate(&config.dataset, 1)?;

    let fitted = fit(&dataset, &config.model, &config.train, 1)?;
    for rec in fitted.curve.iter().filter(|r| r.val_loss.is_some()) {
        println!("step {:4}  train {:.4}  val {:.4}", rec.step, rec.train_loss, rec.val_loss.unwrap());
    }

    let ends = subsample(&fitted.splits.test, config.train.max_eval_windows);
    let model = evaluate(&fitted.model, &fitted.data, &ends)?.report;
    let (persistence, mean) = baselines(&fitted.data, &ends)?;
    println!("{} parameters, {} test windows", fitted.model.num_params(), ends.len());
    for (name, r) in [("model", &model), ("persistence", &persistence), ("mean", &mean)] {
        println!("{name:12} vm MAE {:.5} p.u.  va MAE {:.5} rad", r.magnitude.mae, r.angle.mae);
    }
    Ok(())
}
