//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dsse_feeder::Dataset;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{subsample, window_splits, Normalizer, SeriesData};
use crate::error::{DsseError, Result};
use crate::experiments::{run_bench, run_experiment, write_csv, ExperimentKind, ExperimentOutput};
use crate::model::{Dims, Model, Variant};
use crate::train::{baselines, evaluate, load_checkpoint, save_checkpoint, train, CheckpointMeta};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mamba-dsse", version, about = "Feeder simulation, training and evaluation of learned state estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for data, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<VariantArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Dsse,
    Mixer,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Dsse => Variant::MambaDsse,
            VariantArg::Mixer => Variant::MambaMixer,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a feeder dataset directory.
    Simulate {
        /// Also write human-readable CSV copies.
        #[arg(long)]
        csv: bool,
    },
    /// Train a model; writes model.ckpt and loss.csv.
    Train {
        /// Dataset directory from `simulate` (generated from the config otherwise).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split; writes metrics.json,
    /// per_bus.csv and predictions.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run an experiment grid: scalability, sampling, seqlen, pv_fraction or bench.
    Ablate { kind: String },
    /// Time per-window inference; writes bench.csv.
    Bench,
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                DsseError::Config(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.experiment.seeds = vec![seed];
    }
    if let Some(v) = cli.variant {
        cfg.model.variant = v.into();
        cfg.experiment.variants = vec![v.into()];
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::Simulate { csv } => {
            let ds = Dataset::generate(&cfg.dataset, cfg.train.seed)?;
            ds.save(out, *csv)?;
        }
        Command::Train { data } => train_command(&cfg, data.as_deref(), out)?,
        Command::Eval { checkpoint, data } => eval_command(checkpoint, data.as_deref(), out)?,
        Command::Ablate { kind } => {
            let kind = ExperimentKind::parse(kind).ok_or_else(|| {
                let known: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                DsseError::Config(format!("unknown experiment {kind:?}; expected one of {}", known.join(", ")))
            })?;
            run_experiment(kind, &cfg)?.write(out)?;
        }
        Command::Bench => ExperimentOutput::Bench(run_bench(&cfg)?).write(out)?,
    }
    Ok(())
}

fn load_or_generate(cfg: &RunConfig, data: Option<&Path>) -> Result<(Dataset, u64)> {
    match data {
        Some(dir) => {
            let ds = Dataset::load(dir)?;
            let seed = ds.seeds.case;
            Ok((ds, seed))
        }
        None => Ok((Dataset::generate(&cfg.dataset, cfg.train.seed)?, cfg.train.seed)),
    }
}

fn train_command(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    cfg.validate()?;
    let (ds, data_seed) = load_or_generate(cfg, data)?;
    let normalizer = Normalizer::fit(&ds, ds.split.train_end)?;
    let series = SeriesData::new(&ds, &normalizer)?;
    let splits = window_splits(ds.split.train_end, ds.split.steps, cfg.model.window, cfg.train.validation_fraction)?;
    let dims = Dims { d_in: series.d_in, n_buses: series.n_buses };
    let model = Model::new(&cfg.model, dims, cfg.train.seed)?;
    let trained = train(model, &series, &splits, &cfg.train)?;
    fs::create_dir_all(out)?;
    let meta = CheckpointMeta {
        model: cfg.model.clone(),
        dims,
        normalizer,
        train: cfg.train.clone(),
        dataset: ds.config.clone(),
        data_seed,
        observed: series.observed.clone(),
    };
    save_checkpoint(&out.join("model.ckpt"), &trained.model, Some(&trained.adam), &meta)?;
    write_csv(&out.join("loss.csv"), &trained.curve)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    /// Minutes since the start of the series.
    timestamp: u64,
    bus: usize,
    true_vm: f64,
    pred_vm: f64,
    true_va: f64,
    pred_va: f64,
}

fn eval_command(checkpoint: &Path, data: Option<&Path>, out: &Path) -> Result<()> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let ds = match data {
        Some(dir) => Dataset::load(dir)?,
        None => Dataset::generate(&meta.dataset, meta.data_seed)?,
    };
    if ds.measurements.observed != meta.observed || ds.truth.n_buses != meta.dims.n_buses {
        return Err(DsseError::Config("dataset sensors or size differ from the checkpoint's".into()));
    }
    let series = SeriesData::new(&ds, &meta.normalizer)?;
    let splits = window_splits(ds.split.train_end, ds.split.steps, meta.model.window, meta.train.validation_fraction)?;
    let ends = subsample(&splits.test, meta.train.max_eval_windows);
    let eval = evaluate(&model, &series, &ends)?;
    let (persistence, mean) = baselines(&series, &ends)?;
    fs::create_dir_all(out)?;
    let metrics = json!({
        "variant": meta.model.variant.label(),
        "model": eval.report,
        "persistence": persistence,
        "mean": mean,
    });
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    write_csv(&out.join("per_bus.csv"), &eval.report.per_bus)?;
    let n = series.n_buses;
    let res = u64::from(ds.truth.resolution_minutes);
    let mut rows = Vec::with_capacity(ends.len() * n);
    for ((&end, truth), pred) in eval.ends.iter().zip(&eval.truth).zip(&eval.predictions) {
        for bus in 0..n {
            rows.push(PredictionRow {
                timestamp: end as u64 * res,
                bus,
                true_vm: truth[bus],
                pred_vm: pred[bus],
                true_va: truth[n + bus],
                pred_va: pred[n + bus],
            });
        }
    }
    write_csv(&out.join("predictions.csv"), &rows)?;
    Ok(())
}
