//! Matrix completion by singular value thresholding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::Entries;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvtConfig {
    /// Shrinkage threshold; `None` picks [`default_tau`] from the known entries.
    pub tau: Option<f64>,
    /// Step size; `None` uses `1.2 * M1 * M2 / |known|`.
    pub delta: Option<f64>,
    pub max_iters: usize,
    /// Relative residual on the known entries at which iteration stops.
    pub tol: f64,
}

impl Default for SvtConfig {
    fn default() -> Self {
        Self { tau: None, delta: None, max_iters: 500, tol: 1e-4 }
    }
}

impl SvtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::Config(format!("svt tau must be >= 0, got {:?}", self.tau)));
        }
        if self.delta.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config(format!("svt delta must be > 0, got {:?}", self.delta)));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("svt needs max_iters > 0 and tol > 0".into()));
        }
        Ok(())
    }
}

/// `5 * sqrt(M1 * M2) * rms(known values)`.
pub fn default_tau(known: &Entries, (m1, m2): (usize, usize)) -> f64 {
    let ms = known.iter().map(|e| e.2 * e.2).sum::<f64>() / known.len().max(1) as f64;
    5.0 * ((m1 * m2) as f64).sqrt() * ms.sqrt()
}

/// Geometric grid of `count` thresholds from `lo` to `hi`.
pub fn tau_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// `max(sigma - tau, 0)` applied to each singular value.
pub fn shrink(singular_values: &[f64], tau: f64) -> Vec<f64> {
    singular_values.iter().map(|s| (s - tau).max(0.0)).collect()
}

/// Singular value shrinkage of a whole matrix.
pub fn shrink_matrix(y: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut svd = y.clone().svd(true, true);
    for s in svd.singular_values.iter_mut() {
        *s = (*s - tau).max(0.0);
    }
    svd.recompose().expect("u and v computed")
}

#[derive(Clone, Debug)]
pub struct SvtOutcome {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    /// Relative residual on the known entries after the last iteration.
    pub residual: f64,
    pub converged: bool,
}

/// Completes an `m1 x m2` matrix from `known` entries.
///
/// `X_i = D_tau(Y_{i-1})`, `Y_i = Y_{i-1} + delta P(known - X_i)`, `Y_0 = 0`.
pub fn svt_complete(known: &Entries, (m1, m2): (usize, usize), config: &SvtConfig) -> Result<SvtOutcome> {
    config.validate()?;
    if known.is_empty() {
        return Err(Error::Empty("no known entries to complete from".into()));
    }
    if let Some(&(i, j, _)) = known.iter().find(|&&(i, j, _)| i >= m1 || j >= m2) {
        return Err(Error::Dimension(format!("entry ({i}, {j}) outside {m1}x{m2}")));
    }
    let tau = config.tau.unwrap_or_else(|| default_tau(known, (m1, m2)));
    let norm = known.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(SvtOutcome { matrix: DMatrix::zeros(m1, m2), iterations: 0, residual: 0.0, converged: true });
    }
    let Some(delta) = config.delta else {
        // default step 1.2/p, halved on divergence down to 1
        let mut delta = 1.2 * (m1 * m2) as f64 / known.len() as f64;
        loop {
            match iterate(known, (m1, m2), config, tau, delta, norm) {
                Err(Error::SvtDiverged { .. }) if delta > 1.0 => {
                    log::warn!("svt diverged with step {delta:.3}, retrying with {:.3}", (delta / 2.0).max(1.0));
                    delta = (delta / 2.0).max(1.0);
                }
                other => return other,
            }
        }
    };
    iterate(known, (m1, m2), config, tau, delta, norm)
}

fn iterate(known: &Entries, (m1, m2): (usize, usize), config: &SvtConfig, tau: f64, delta: f64, norm: f64) -> Result<SvtOutcome> {
    let mut y = DMatrix::zeros(m1, m2);
    let mut x = DMatrix::zeros(m1, m2);
    let mut initial = None;
    let mut residual = f64::INFINITY;
    for iter in 1..=config.max_iters {
        x = shrink_matrix(&y, tau);
        let mut sq = 0.0;
        for &(i, j, v) in known {
            let r = v - x[(i, j)];
            sq += r * r;
            y[(i, j)] += delta * r;
        }
        residual = sq.sqrt() / norm;
        let first = *initial.get_or_insert(residual);
        if !residual.is_finite() || residual > 10.0 * first {
            return Err(Error::SvtDiverged { delta, initial: first, current: residual });
        }
        if residual <= config.tol {
            return Ok(SvtOutcome { matrix: x, iterations: iter, residual, converged: true });
        }
    }
    Ok(SvtOutcome { matrix: x, iterations: config.max_iters, residual, converged: false })
}
