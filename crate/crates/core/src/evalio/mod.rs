//! Metrics, file formats, heatmaps and experiment presets.

pub mod formats;
mod presets;
pub mod render;

pub use presets::{
    find_preset, preset_names, presets, run_preset, ExperimentPreset, FieldSpec, Method, PresetData, PresetOutcome,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Mask};

/// Root mean squared difference over `region`.
pub fn rmse(estimate: &CoefficientField, truth: &CoefficientField, region: &Mask) -> Result<f64> {
    if estimate.dims() != truth.dims() || region.dims() != truth.dims() {
        return Err(Error::Dimension(format!(
            "estimate {:?}, truth {:?}, region {:?}",
            estimate.dims(),
            truth.dims(),
            region.dims()
        )));
    }
    if region.is_empty() {
        return Err(Error::Empty("rmse region".into()));
    }
    let sq: f64 = region.iter().map(|(i, j)| (estimate.get(i, j) - truth.get(i, j)).powi(2)).sum();
    Ok((sq / region.count() as f64).sqrt())
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    /// Preset name; baseline rows carry a `/baseline1` or `/baseline2` suffix.
    pub preset: String,
    pub noise_pct: f64,
    pub meas_frac: f64,
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    /// Training epochs; empty for baselines.
    pub epoch: Option<usize>,
    /// Empty when attenuation is not recovered.
    pub rmse_alpha: Option<f64>,
    pub rmse_c2: f64,
    /// Locations the RMSE is taken over.
    #[serde(skip)]
    pub region_size: usize,
}

pub const SUMMARY_HEADER: [&str; 8] = ["preset", "noise_pct", "meas_frac", "r1", "r2", "epoch", "rmse_alpha", "rmse_c2"];

pub fn write_summary_csv(path: &Path, reports: &[RmseReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<RmseReport>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Format(format!("unexpected summary header {:?}", r.headers()?)));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Thread cap from `SDPINN_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("SDPINN_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("SDPINN_THREADS must be a positive integer, got {s:?}"))),
        },
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
