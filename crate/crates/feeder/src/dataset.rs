//! Dataset directory: `manifest.json`, `truth.bin`, `measurements.bin`
//! and an optional `truth.csv`.
//!
//! Both `.bin` files are little-endian `f64`, row-major
//! `[timestep × channel]`; the channel names in the manifest give the
//! column order. Truth channels are `vm[b]`, `va[b]`, `p[b]`, `q[b]`,
//! `i[b]` for every bus; measurement channels are the same quantities
//! for observed buses only.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case::{generate_case, FeederCase};
use crate::error::{FeederError, Result};
use crate::measure::{observe_with, MeasurementSet, ObserveConfig};
use crate::simulate::{simulate, GroundTruthSeries, Quantity};

pub const MANIFEST: &str = "manifest.json";
pub const TRUTH_BIN: &str = "truth.bin";
pub const MEASUREMENTS_BIN: &str = "measurements.bin";
pub const TRUTH_CSV: &str = "truth.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_buses: usize,
    pub pv_fraction: f64,
    pub days: usize,
    pub resolution_minutes: u32,
    pub observe: ObserveConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_buses: 12, pv_fraction: 0.3, days: 30, resolution_minutes: 15, observe: ObserveConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub case: u64,
    pub simulation: u64,
    pub noise: u64,
}

impl Seeds {
    pub fn from_master(seed: u64) -> Self {
        Self { case: seed, simulation: seed, noise: seed }
    }
}

/// Steps `[0, train_end)` are training data, `[train_end, steps)` test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train_end: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub seeds: Seeds,
    pub case: FeederCase,
    pub truth: GroundTruthSeries,
    pub measurements: MeasurementSet,
    pub split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    config: DatasetConfig,
    seeds: Seeds,
    case: FeederCase,
    resolution_minutes: u32,
    steps: usize,
    split: Split,
    observed_buses: Vec<usize>,
    truth_channels: Vec<String>,
    measurement_channels: Vec<String>,
    /// σ per measurement channel (relative, except absolute radians for `va`).
    measurement_sigma: Vec<f64>,
}

pub fn truth_channel_names(n_buses: usize) -> Vec<String> {
    Quantity::ALL
        .iter()
        .flat_map(|q| (0..n_buses).map(move |b| format!("{}[{b}]", q.label())))
        .collect()
}

impl Dataset {
    /// Generate case, series and measurements from one master seed.
    pub fn generate(config: &DatasetConfig, seed: u64) -> Result<Self> {
        let seeds = Seeds::from_master(seed);
        let case = generate_case(config.n_buses, config.pv_fraction, seeds.case)?;
        let truth = simulate(&case, config.days, config.resolution_minutes, seeds.simulation)?;
        let measurements = observe_with(&truth, &config.observe, seeds.noise)?;
        // Two thirds of the simulated days train, the rest test.
        let train_days = (2 * config.days) / 3;
        let split = Split { train_end: train_days * truth.steps_per_day(), steps: truth.steps };
        Ok(Self { config: config.clone(), seeds, case, truth, measurements, split })
    }

    /// Stride-decimate truth and measurements; a decimated step belongs to
    /// the test split when its original step did.
    pub fn resample(&self, factor: usize) -> Result<Self> {
        let truth = self.truth.resample(factor)?;
        let measurements = self.measurements.resample(factor)?;
        let train_end = self.split.train_end.div_ceil(factor).min(truth.steps);
        let mut config = self.config.clone();
        config.resolution_minutes = truth.resolution_minutes;
        Ok(Self {
            config,
            seeds: self.seeds,
            case: self.case.clone(),
            split: Split { train_end, steps: truth.steps },
            truth,
            measurements,
        })
    }

    pub fn save(&self, dir: &Path, with_csv: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: "dsse-dataset".into(),
            version: 1,
            config: self.config.clone(),
            seeds: self.seeds,
            case: self.case.clone(),
            resolution_minutes: self.truth.resolution_minutes,
            steps: self.truth.steps,
            split: self.split,
            observed_buses: self.measurements.observed.clone(),
            truth_channels: truth_channel_names(self.truth.n_buses),
            measurement_channels: self.measurements.channel_names(),
            measurement_sigma: self.measurements.sigma.clone(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        fs::write(dir.join(TRUTH_BIN), f64_bytes(&self.truth.values))?;
        fs::write(dir.join(MEASUREMENTS_BIN), f64_bytes(&self.measurements.values))?;
        if with_csv {
            self.write_truth_csv(&dir.join(TRUTH_CSV))?;
        }
        Ok(())
    }

    fn write_truth_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "step,minute,{}", truth_channel_names(self.truth.n_buses).join(","))?;
        for t in 0..self.truth.steps {
            let row: Vec<String> = self.truth.row(t).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{t},{},{}", self.truth.minute(t), row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.format != "dsse-dataset" || manifest.version != 1 {
            return Err(FeederError::Dataset(format!("unsupported manifest {} v{}", manifest.format, manifest.version)));
        }
        let n = manifest.case.n_buses;
        let truth_values = read_f64(&dir.join(TRUTH_BIN))?;
        let meas_values = read_f64(&dir.join(MEASUREMENTS_BIN))?;
        let steps = manifest.steps;
        let k = manifest.observed_buses.len();
        if truth_values.len() != steps * 5 * n || meas_values.len() != steps * 5 * k {
            return Err(FeederError::Dataset("binary sizes do not match manifest".into()));
        }
        if manifest.measurement_sigma.len() != 5 * k {
            return Err(FeederError::Dataset("sigma count does not match channels".into()));
        }
        // PV output is not persisted; it is only needed for inspection.
        let truth = GroundTruthSeries {
            n_buses: n,
            resolution_minutes: manifest.resolution_minutes,
            steps,
            values: truth_values,
            pv: vec![0.0; steps * n],
        };
        let measurements = MeasurementSet {
            n_buses: n,
            resolution_minutes: manifest.resolution_minutes,
            steps,
            observed: manifest.observed_buses,
            sigma: manifest.measurement_sigma,
            values: meas_values,
        };
        Ok(Self {
            config: manifest.config,
            seeds: manifest.seeds,
            case: manifest.case,
            truth,
            measurements,
            split: manifest.split,
        })
    }
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f64(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(FeederError::Dataset(format!("{} is not a whole number of f64", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}
