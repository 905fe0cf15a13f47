//! Synthetic single-phase-equivalent radial distribution feeders.
//!
//! [`generate_case`] draws a random radial topology with line impedances,
//! daily load shapes and PV placement; [`simulate`] runs a quasi-static
//! time series, solving each step with a backward/forward sweep;
//! [`observe`] places sensors on a fraction of buses and adds Gaussian
//! measurement noise. [`Dataset`] bundles the three and reads/writes the
//! on-disk format.

pub mod case;
pub mod dataset;
mod error;
pub mod measure;
pub mod powerflow;
pub mod rng;
pub mod simulate;

pub use case::{generate_case, FeederCase, LoadShape};
pub use dataset::{Dataset, DatasetConfig, Seeds, Split};
pub use error::{FeederError, Result};
pub use measure::{observe, observe_with, MeasurementFrame, MeasurementSet, ObserveConfig};
pub use rng::{stream_rng, Stream};
pub use simulate::{clear_sky, simulate, GroundTruthSeries, Quantity};
