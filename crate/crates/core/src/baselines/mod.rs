//! Classical recovery pipelines: interpolation + finite differences + least
//! squares (baseline 1), and finite differences at well-measured locations
//! followed by matrix completion (baseline 2).

mod akima;
mod fd;
mod svt;

pub use akima::{akima_interpolate_frame, interpolate_line};
pub use fd::{fd_derivatives, ols_recover, stencil_available, FdStencil, OlsEstimate};
pub use svt::{default_tau, shrink, shrink_matrix, svt_complete, tau_grid, SvtConfig, SvtOutcome};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Mask, Quantity, WaveField};
use crate::lowrank::Entries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationFlag {
    /// Least-squares estimate from this location's own derivatives.
    Estimated,
    /// The location's derivatives could not separate the two coefficients.
    RankDeficient,
    Given,
    /// Filled in by matrix completion.
    Completed,
    /// Boundary location without a centred stencil.
    Unavailable,
}

impl LocationFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            LocationFlag::Estimated => "estimated",
            LocationFlag::RankDeficient => "rank_deficient",
            LocationFlag::Given => "given",
            LocationFlag::Completed => "completed",
            LocationFlag::Unavailable => "unavailable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocationRecord {
    pub i: usize,
    pub j: usize,
    pub alpha_hat: f64,
    pub c2_hat: f64,
    pub flag: LocationFlag,
}

/// Recovered attenuation and speed-squared maps. Entries without an estimate
/// hold NaN.
#[derive(Clone, Debug)]
pub struct BaselineRecovery {
    pub alpha: CoefficientField,
    pub c2: CoefficientField,
    /// Row-major, one per location.
    pub flags: Vec<LocationFlag>,
}

impl BaselineRecovery {
    pub fn dims(&self) -> (usize, usize) {
        self.alpha.dims()
    }

    pub fn flag(&self, i: usize, j: usize) -> LocationFlag {
        self.flags[i * self.dims().1 + j]
    }

    /// Locations holding finite estimates of both coefficients.
    pub fn estimated(&self) -> Mask {
        let (m1, m2) = self.dims();
        let bits = (0..m1 * m2)
            .map(|k| {
                let (i, j) = (k / m2, k % m2);
                self.alpha.get(i, j).is_finite() && self.c2.get(i, j).is_finite()
            })
            .collect();
        Mask::from_bits(m1, m2, bits).expect("dims match")
    }

    pub fn records(&self) -> Vec<LocationRecord> {
        let (m1, m2) = self.dims();
        (0..m1)
            .flat_map(|i| (0..m2).map(move |j| (i, j)))
            .map(|(i, j)| LocationRecord {
                i,
                j,
                alpha_hat: self.alpha.get(i, j),
                c2_hat: self.c2.get(i, j),
                flag: self.flag(i, j),
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interior(m1: usize, m2: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..m1.saturating_sub(1)).flat_map(move |i| (1..m2.saturating_sub(1)).map(move |j| (i, j)))
}

/// Fills every frame from the measured locations.
pub fn interpolate_field(field: &WaveField, measured: &Mask) -> Result<WaveField> {
    let g = field.grid;
    let frames: Vec<DMatrix<f64>> = (0..g.t)
        .into_par_iter()
        .map(|n| akima_interpolate_frame(&field.frame(n), measured))
        .collect::<Result<_>>()?;
    let mut out = WaveField::zeros(g);
    for (n, f) in frames.iter().enumerate() {
        out.set_frame(n, f);
    }
    Ok(out)
}

/// Interpolates the measurements frame by frame, then fits both
/// coefficients at every interior location.
pub fn baseline1_pipeline(field: &WaveField, measured: &Mask) -> Result<BaselineRecovery> {
    let g = field.grid;
    if measured.dims() != (g.m1, g.m2) {
        return Err(Error::Dimension(format!("mask is {:?}, grid is {}x{}", measured.dims(), g.m1, g.m2)));
    }
    let filled = interpolate_field(field, measured)?;
    let locations: Vec<(usize, usize)> = interior(g.m1, g.m2).collect();
    let estimates: Vec<OlsEstimate> = locations
        .par_iter()
        .map(|&(i, j)| fd_derivatives(&filled, None, i, j).map(|s| ols_recover(&s)))
        .collect::<Result<_>>()?;
    let mut alpha = DMatrix::from_element(g.m1, g.m2, f64::NAN);
    let mut c2 = alpha.clone();
    let mut flags = vec![LocationFlag::Unavailable; g.m1 * g.m2];
    for (&(i, j), e) in locations.iter().zip(&estimates) {
        alpha[(i, j)] = e.alpha;
        c2[(i, j)] = e.c2;
        flags[i * g.m2 + j] = if e.rank_deficient { LocationFlag::RankDeficient } else { LocationFlag::Estimated };
    }
    Ok(BaselineRecovery {
        alpha: CoefficientField::new(alpha, Quantity::Attenuation),
        c2: CoefficientField::new(c2, Quantity::SpeedSquared),
        flags,
    })
}

/// Coefficient values known in advance, in physical units (`alpha >= 0`).
#[derive(Clone, Debug, Default)]
pub struct GivenValues {
    pub alpha: Entries,
    pub c2: Entries,
}

/// Fits both coefficients where a location and its four neighbours are
/// measured, adds the given values, and completes each map by SVT.
pub fn baseline2_pipeline(
    field: &WaveField,
    measured: &Mask,
    given: &GivenValues,
    svt: &SvtConfig,
) -> Result<BaselineRecovery> {
    let g = field.grid;
    let (m1, m2) = (g.m1, g.m2);
    if measured.dims() != (m1, m2) {
        return Err(Error::Dimension(format!("mask is {:?}, grid is {m1}x{m2}", measured.dims())));
    }
    let eligible: Vec<(usize, usize)> = interior(m1, m2).filter(|&(i, j)| stencil_available(measured, i, j)).collect();
    let estimates: Vec<OlsEstimate> = eligible
        .par_iter()
        .map(|&(i, j)| fd_derivatives(field, Some(measured), i, j).map(|s| ols_recover(&s)))
        .collect::<Result<_>>()?;

    let mut flags = vec![LocationFlag::Completed; m1 * m2];
    let mut alpha_known = BTreeMap::new();
    let mut c2_known = BTreeMap::new();
    for (&(i, j), e) in eligible.iter().zip(&estimates) {
        if e.rank_deficient {
            flags[i * m2 + j] = LocationFlag::RankDeficient;
        } else {
            flags[i * m2 + j] = LocationFlag::Estimated;
            alpha_known.insert((i, j), e.alpha);
            c2_known.insert((i, j), e.c2);
        }
    }
    for (known, entries) in [(&mut alpha_known, &given.alpha), (&mut c2_known, &given.c2)] {
        for &(i, j, v) in entries {
            if i >= m1 || j >= m2 {
                return Err(Error::Dimension(format!("given entry ({i}, {j}) outside {m1}x{m2}")));
            }
            known.insert((i, j), v);
            flags[i * m2 + j] = LocationFlag::Given;
        }
    }
    if alpha_known.is_empty() && c2_known.is_empty() {
        return Err(Error::Empty("no eligible locations and no given values: nothing to complete".into()));
    }
    let complete = |known: BTreeMap<(usize, usize), f64>| -> Result<DMatrix<f64>> {
        if known.is_empty() {
            return Ok(DMatrix::from_element(m1, m2, f64::NAN));
        }
        let entries: Entries = known.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        Ok(svt_complete(&entries, (m1, m2), svt)?.matrix)
    };
    Ok(BaselineRecovery {
        alpha: CoefficientField::new(complete(alpha_known)?, Quantity::Attenuation),
        c2: CoefficientField::new(complete(c2_known)?, Quantity::SpeedSquared),
        flags,
    })
}
