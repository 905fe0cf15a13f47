//! Generate a synthetic radial feeder, simulate a month of quasi-static
//! operation and summarize voltages and sensor coverage.
//!
//! cargo run -p dsse-feeder --example simulate_feeder -- 40

use dsse_feeder::powerflow::mismatch;
use dsse_feeder::{Dataset, DatasetConfig, Quantity};

fn main() -> dsse_feeder::Result<()> {
    let n_buses = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12);
    let config = DatasetConfig { n_buses, ..DatasetConfig::default() };
    let ds = Dataset::generate(&config, 1)?;
    let truth = &ds.truth;

    let (mut vmin, mut vmax, mut worst) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for t in 0..truth.steps {
        for &vm in truth.quantity(t, Quantity::Vm) {
            vmin = vmin.min(vm);
            vmax = vmax.max(vm);
        }
        worst = worst.max(mismatch(&ds.case, &truth.voltage(t), &truth.injection(t)));
    }
    let pv_buses = ds.case.pv_capacity.iter().filter(|&&c| c > 0.0).count();
    println!("{n_buses} buses, {} steps at {} min, {pv_buses} with PV", truth.steps, truth.resolution_minutes);
    println!("voltage magnitude range [{vmin:.4}, {vmax:.4}] p.u.");
    println!("worst bus power mismatch {worst:.2e} p.u.");
    println!("observed buses {:?}", ds.measurements.observed);
    println!("train steps {}, test steps {}", ds.split.train_end, ds.split.steps - ds.split.train_end);
    Ok(())
}
