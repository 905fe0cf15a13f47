//! Single-window inference time as the history grows.
//!
//! cargo run -p mamba-dsse --example bench_runtime

use mamba_dsse::experiments::run_bench;
use mamba_dsse::RunConfig;

fn main() -> mamba_dsse::Result<()> {
    let mut config = RunConfig::desk();
    config.experiment.bench_sizes = vec![12, 40];
    config.experiment.bench_windows = vec![96, 192, 672];
    config.experiment.bench_reps = 10;
    for r in run_bench(&config)? {
        println!(
            "{:5} {:3} buses  {:4} steps ({:5.1} h)  median {:7.2} ms",
            r.variant,
            r.n_buses,
            r.window,
            r.hours,
            r.median_seconds * 1e3
        );
    }
    Ok(())
}
