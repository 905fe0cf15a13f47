//! Experiment grids: scalability, sampling rate, window length, PV
//! fraction and inference runtime.
//!
//! Every accuracy cell trains each requested variant from scratch on its
//! own dataset and seed. Cells run sequentially and in a fixed order, so
//! the CSVs are reproducible byte for byte. A cell that errors is written
//! as a `failed` row carrying the message.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::time::Instant;

use dsse_feeder::{Dataset, DatasetConfig};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{subsample, window_splits, Normalizer, SeriesData, WindowSplits};
use crate::error::{DsseError, Result};
use crate::metrics::MetricsReport;
use crate::model::{Dims, Model, ModelConfig, Variant};
use crate::train::{baselines, evaluate, train, LossRecord, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Scalability,
    Sampling,
    Seqlen,
    PvFraction,
    Bench,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Scalability,
        ExperimentKind::Sampling,
        ExperimentKind::Seqlen,
        ExperimentKind::PvFraction,
        ExperimentKind::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Scalability => "scalability",
            ExperimentKind::Sampling => "sampling",
            ExperimentKind::Seqlen => "seqlen",
            ExperimentKind::PvFraction => "pv_fraction",
            ExperimentKind::Bench => "bench",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Grid definitions. Each kind reads only its own lists; everything else
/// comes from the dataset, model and train sections of [`RunConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Bus counts for `scalability`.
    pub sizes: Vec<usize>,
    /// Resolution the `sampling` models are trained at, minutes.
    pub train_resolution_minutes: u32,
    /// Decimation factors evaluated by `sampling`.
    pub factors: Vec<usize>,
    /// Window lengths (steps) for `seqlen`.
    pub windows: Vec<usize>,
    pub pv_fractions: Vec<f64>,
    pub bench_sizes: Vec<usize>,
    /// Window lengths (steps) timed by `bench`.
    pub bench_windows: Vec<usize>,
    pub bench_reps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            variants: Variant::ALL.to_vec(),
            sizes: vec![12, 40, 120],
            train_resolution_minutes: 1,
            factors: vec![1, 2, 5, 15],
            windows: vec![8, 24, 48, 96],
            pv_fractions: vec![0.0, 0.15, 0.3, 0.5, 0.8],
            bench_sizes: vec![12, 40, 120],
            // 24, 48, 72 and 168 hours at 15-minute resolution.
            bench_windows: vec![96, 192, 288, 672],
            bench_reps: 100,
        }
    }
}

/// One variant × cell × seed result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub kind: String,
    /// Name of the swept parameter.
    pub parameter: String,
    pub value: String,
    pub variant: String,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    pub samples: Option<usize>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub vm_mae: Option<f64>,
    pub vm_rmse: Option<f64>,
    pub va_mae: Option<f64>,
    pub va_rmse: Option<f64>,
    pub persistence_vm_mae: Option<f64>,
    pub mean_vm_mae: Option<f64>,
    pub error: Option<String>,
}

impl ExperimentRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Mean ± sample standard deviation over the successful seeds of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: String,
    pub parameter: String,
    pub value: String,
    pub variant: String,
    pub ok: usize,
    pub failed: usize,
    pub mae_mean: Option<f64>,
    pub mae_std: Option<f64>,
    pub vm_mae_mean: Option<f64>,
    pub vm_mae_std: Option<f64>,
    pub va_mae_mean: Option<f64>,
    pub va_mae_std: Option<f64>,
}

/// Median wall-clock inference time for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub n_buses: usize,
    pub window: usize,
    pub hours: f64,
    pub params: usize,
    pub reps: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
}

pub enum ExperimentOutput {
    Accuracy { rows: Vec<ExperimentRow>, summary: Vec<SummaryRow> },
    Bench(Vec<BenchRow>),
}

impl ExperimentOutput {
    /// Write `results.csv` and `summary.csv`, or `bench.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        match self {
            ExperimentOutput::Accuracy { rows, summary } => {
                write_csv(&dir.join("results.csv"), rows)?;
                write_csv(&dir.join("summary.csv"), summary)
            }
            ExperimentOutput::Bench(rows) => write_csv(&dir.join("bench.csv"), rows),
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_experiment(kind: ExperimentKind, config: &RunConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let exp = &config.experiment;
    if exp.seeds.is_empty() || exp.variants.is_empty() {
        return Err(DsseError::Config("experiment: seeds and variants must be non-empty".into()));
    }
    let rows = match kind {
        ExperimentKind::Bench => return Ok(ExperimentOutput::Bench(run_bench(config)?)),
        ExperimentKind::Scalability => sweep(config, kind, "n_buses", &exp.sizes, |&n, seed| {
            let dataset = DatasetConfig { n_buses: n, ..config.dataset.clone() };
            Dataset::generate(&dataset, seed).map_err(DsseError::from).map(|ds| (ds, config.model.clone()))
        }),
        ExperimentKind::PvFraction => sweep(config, kind, "pv_fraction", &exp.pv_fractions, |&pv, seed| {
            let dataset = DatasetConfig { pv_fraction: pv, ..config.dataset.clone() };
            Dataset::generate(&dataset, seed).map_err(DsseError::from).map(|ds| (ds, config.model.clone()))
        }),
        ExperimentKind::Seqlen => sweep(config, kind, "window", &exp.windows, |&w, seed| {
            let model = ModelConfig { window: w, ..config.model.clone() };
            Dataset::generate(&config.dataset, seed).map_err(DsseError::from).map(|ds| (ds, model))
        }),
        ExperimentKind::Sampling => sampling(config),
    };
    let summary = summarize(&rows);
    Ok(ExperimentOutput::Accuracy { rows, summary })
}

/// A trained model together with the data it was fitted on.
pub struct Fitted {
    pub model: Model,
    pub data: SeriesData,
    pub splits: WindowSplits,
    pub curve: Vec<LossRecord>,
}

/// Normalize, split and train one variant on `dataset`.
pub fn fit(dataset: &Dataset, model: &ModelConfig, train_cfg: &TrainConfig, seed: u64) -> Result<Fitted> {
    let normalizer = Normalizer::fit(dataset, dataset.split.train_end)?;
    let data = SeriesData::new(dataset, &normalizer)?;
    let splits = window_splits(dataset.split.train_end, dataset.split.steps, model.window, train_cfg.validation_fraction)?;
    let dims = Dims { d_in: data.d_in, n_buses: data.n_buses };
    let init = Model::new(model, dims, seed)?;
    let trained = train(init, &data, &splits, &TrainConfig { seed, ..train_cfg.clone() })?;
    Ok(Fitted { model: trained.model, data, splits, curve: trained.curve })
}

struct CellScores {
    report: MetricsReport,
    persistence: MetricsReport,
    mean: MetricsReport,
}

fn score(model: &Model, data: &SeriesData, ends: &[usize]) -> Result<CellScores> {
    let report = evaluate(model, data, ends)?.report;
    let (persistence, mean) = baselines(data, ends)?;
    Ok(CellScores { report, persistence, mean })
}

fn row(kind: ExperimentKind, parameter: &str, value: &impl Display, variant: Variant, seed: u64, result: Result<CellScores>) -> ExperimentRow {
    let mut row = ExperimentRow {
        kind: kind.name().into(),
        parameter: parameter.into(),
        value: value.to_string(),
        variant: variant.label().into(),
        seed,
        status: "ok".into(),
        samples: None,
        mae: None,
        rmse: None,
        vm_mae: None,
        vm_rmse: None,
        va_mae: None,
        va_rmse: None,
        persistence_vm_mae: None,
        mean_vm_mae: None,
        error: None,
    };
    match result {
        Ok(s) => {
            row.samples = Some(s.report.samples);
            row.mae = Some(s.report.overall.mae);
            row.rmse = Some(s.report.overall.rmse);
            row.vm_mae = Some(s.report.magnitude.mae);
            row.vm_rmse = Some(s.report.magnitude.rmse);
            row.va_mae = Some(s.report.angle.mae);
            row.va_rmse = Some(s.report.angle.rmse);
            row.persistence_vm_mae = Some(s.persistence.magnitude.mae);
            row.mean_vm_mae = Some(s.mean.magnitude.mae);
        }
        Err(e) => {
            row.status = "failed".into();
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Cells where only the dataset or model config changes per value.
fn sweep<V: Display>(
    config: &RunConfig,
    kind: ExperimentKind,
    parameter: &str,
    values: &[V],
    setup: impl Fn(&V, u64) -> Result<(Dataset, ModelConfig)>,
) -> Vec<ExperimentRow> {
    let exp = &config.experiment;
    let mut rows = Vec::new();
    for value in values {
        for &seed in &exp.seeds {
            let prepared = setup(value, seed);
            for &variant in &exp.variants {
                let result = prepared.as_ref().map_err(clone_err).and_then(|(ds, model)| {
                    let model = ModelConfig { variant, ..model.clone() };
                    let fitted = fit(ds, &model, &config.train, seed)?;
                    let ends = subsample(&fitted.splits.test, config.train.max_eval_windows);
                    score(&fitted.model, &fitted.data, &ends)
                });
                rows.push(row(kind, parameter, value, variant, seed, result));
            }
        }
    }
    rows
}

fn clone_err(e: &DsseError) -> DsseError {
    DsseError::Config(format!("cell setup failed: {e}"))
}

/// Train at the base resolution, evaluate on stride-decimated series.
fn sampling(config: &RunConfig) -> Vec<ExperimentRow> {
    let exp = &config.experiment;
    let base = DatasetConfig { resolution_minutes: exp.train_resolution_minutes, ..config.dataset.clone() };
    let kind = ExperimentKind::Sampling;
    let mut rows = Vec::new();
    for &seed in &exp.seeds {
        let dataset = Dataset::generate(&base, seed).map_err(DsseError::from);
        for &variant in &exp.variants {
            let model = ModelConfig { variant, ..config.model.clone() };
            let fitted = dataset.as_ref().map_err(clone_err).and_then(|ds| fit(ds, &model, &config.train, seed));
            for &factor in &exp.factors {
                let result = fitted.as_ref().map_err(clone_err).and_then(|f| {
                    let ds = dataset.as_ref().map_err(clone_err)?.resample(factor)?;
                    let data = SeriesData::new(&ds, &f.data.normalizer)?;
                    let splits = window_splits(ds.split.train_end, ds.split.steps, model.window, config.train.validation_fraction)?;
                    let ends = subsample(&splits.test, config.train.max_eval_windows);
                    score(&f.model, &data, &ends)
                });
                rows.push(row(kind, "factor", &factor, variant, seed, result));
            }
        }
    }
    rows
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (Some(mean), Some(std))
}

/// Aggregate rows over seeds, keeping first-appearance order of cells.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str, &str, &str)> = Vec::new();
    for r in rows {
        let key = (r.kind.as_str(), r.parameter.as_str(), r.value.as_str(), r.variant.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(kind, parameter, value, variant)| {
            let cell: Vec<&ExperimentRow> = rows
                .iter()
                .filter(|r| r.kind == kind && r.parameter == parameter && r.value == value && r.variant == variant)
                .collect();
            let ok: Vec<&ExperimentRow> = cell.iter().copied().filter(|r| r.is_ok()).collect();
            let collect = |f: fn(&ExperimentRow) -> Option<f64>| mean_std(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let (mae_mean, mae_std) = collect(|r| r.mae);
            let (vm_mae_mean, vm_mae_std) = collect(|r| r.vm_mae);
            let (va_mae_mean, va_mae_std) = collect(|r| r.va_mae);
            SummaryRow {
                kind: kind.into(),
                parameter: parameter.into(),
                value: value.into(),
                variant: variant.into(),
                ok: ok.len(),
                failed: cell.len() - ok.len(),
                mae_mean,
                mae_std,
                vm_mae_mean,
                vm_mae_std,
                va_mae_mean,
                va_mae_std,
            }
        })
        .collect()
}

/// Time single-window inference with freshly initialized models. The
/// cost does not depend on parameter values.
pub fn run_bench(config: &RunConfig) -> Result<Vec<BenchRow>> {
    let exp = &config.experiment;
    if exp.bench_reps == 0 {
        return Err(DsseError::Config("bench: bench_reps must be positive".into()));
    }
    let seed = config.train.seed;
    let mut rows = Vec::new();
    for &n in &exp.bench_sizes {
        let ds = Dataset::generate(&DatasetConfig { n_buses: n, ..config.dataset.clone() }, seed)?;
        let normalizer = Normalizer::fit(&ds, ds.split.train_end)?;
        let data = SeriesData::new(&ds, &normalizer)?;
        for &variant in &exp.variants {
            for &window in &exp.bench_windows {
                if window > data.steps {
                    return Err(DsseError::Config(format!("bench: window {window} longer than the {}-step series", data.steps)));
                }
                let cfg = ModelConfig { variant, window, ..config.model.clone() };
                let model = Model::new(&cfg, Dims { d_in: data.d_in, n_buses: n }, seed)?;
                let batch = data.batch(&[data.steps - 1], window)?;
                model.predict(&batch)?;
                let mut times = Vec::with_capacity(exp.bench_reps);
                for _ in 0..exp.bench_reps {
                    let start = Instant::now();
                    model.predict(&batch)?;
                    times.push(start.elapsed().as_secs_f64());
                }
                times.sort_by(f64::total_cmp);
                rows.push(BenchRow {
                    variant: variant.label().into(),
                    n_buses: n,
                    window,
                    hours: window as f64 * ds.config.resolution_minutes as f64 / 60.0,
                    params: model.num_params(),
                    reps: exp.bench_reps,
                    median_seconds: median(&times),
                    min_seconds: times[0],
                });
            }
        }
    }
    Ok(rows)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
