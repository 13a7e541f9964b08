//! Central finite differences and per-location least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{Mask, WaveField};

/// Central-difference derivatives at one interior location, time steps
/// `1..T-1` (the first and last frames have no centred time stencil).
#[derive(Clone, Debug, PartialEq)]
pub struct FdStencil {
    pub u_x: Vec<f64>,
    pub u_xx: Vec<f64>,
    pub u_y: Vec<f64>,
    pub u_yy: Vec<f64>,
    pub u_t: Vec<f64>,
    pub u_tt: Vec<f64>,
}

impl FdStencil {
    pub fn len(&self) -> usize {
        self.u_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_t.is_empty()
    }

    pub fn laplacian(&self) -> Vec<f64> {
        self.u_xx.iter().zip(&self.u_yy).map(|(a, b)| a + b).collect()
    }
}

/// Whether `(i, j)` and its four axis neighbours are interior and measured.
pub fn stencil_available(mask: &Mask, i: usize, j: usize) -> bool {
    let (m1, m2) = mask.dims();
    i >= 1
        && j >= 1
        && i + 1 < m1
        && j + 1 < m2
        && [(i, j), (i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
            .iter()
            .all(|&(a, b)| mask.contains(a, b))
}

/// Derivatives at `(i, j)`; `measured` (if given) must contain the location
/// and its four neighbours.
pub fn fd_derivatives(field: &WaveField, measured: Option<&Mask>, i: usize, j: usize) -> Result<FdStencil> {
    let g = &field.grid;
    if i == 0 || j == 0 || i + 1 >= g.m1 || j + 1 >= g.m2 {
        return Err(Error::Stencil { i, j, reason: "not an interior location".into() });
    }
    if g.t < 3 {
        return Err(Error::Stencil { i, j, reason: format!("need at least 3 frames, have {}", g.t) });
    }
    if let Some(mask) = measured {
        if !stencil_available(mask, i, j) {
            return Err(Error::Stencil { i, j, reason: "missing neighbour measurement".into() });
        }
    }
    let c = field.series(i, j);
    let (xm, xp) = (field.series(i - 1, j), field.series(i + 1, j));
    let (ym, yp) = (field.series(i, j - 1), field.series(i, j + 1));
    let (dx, dy, dt) = (g.dx, g.dy, g.dt);
    let range = 1..g.t - 1;
    Ok(FdStencil {
        u_x: range.clone().map(|k| (xp[k] - xm[k]) / (2.0 * dx)).collect(),
        u_xx: range.clone().map(|k| (xp[k] - 2.0 * c[k] + xm[k]) / (dx * dx)).collect(),
        u_y: range.clone().map(|k| (yp[k] - ym[k]) / (2.0 * dy)).collect(),
        u_yy: range.clone().map(|k| (yp[k] - 2.0 * c[k] + ym[k]) / (dy * dy)).collect(),
        u_t: range.clone().map(|k| (c[k + 1] - c[k - 1]) / (2.0 * dt)).collect(),
        u_tt: range.map(|k| (c[k + 1] - 2.0 * c[k] + c[k - 1]) / (dt * dt)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlsEstimate {
    pub alpha: f64,
    pub c2: f64,
    /// `[-u_t, lap u]` lacked full column rank; the estimate is not usable.
    pub rank_deficient: bool,
}

// Columns whose singular-value ratio falls below this are treated as dependent.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of `u_tt = -alpha u_t + c2 lap u`.
pub fn ols_recover(stencil: &FdStencil) -> OlsEstimate {
    let n = stencil.len();
    let lap = stencil.laplacian();
    let phi = DMatrix::from_fn(n, 2, |r, c| if c == 0 { -stencil.u_t[r] } else { lap[r] });
    let rhs = DVector::from_column_slice(&stencil.u_tt);
    let svd = phi.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let rank_deficient = n < 2 || !(smax > 0.0) || s.min() <= RANK_TOL * smax;
    if rank_deficient {
        return OlsEstimate { alpha: f64::NAN, c2: f64::NAN, rank_deficient: true };
    }
    let x = svd.solve(&rhs, 0.0).expect("u and v computed");
    OlsEstimate { alpha: x[0], c2: x[1], rank_deficient: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use proptest::prelude::*;

    fn field_from(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> WaveField {
        let mut w = WaveField::zeros(grid);
        for i in 0..grid.m1 {
            for j in 0..grid.m2 {
                for n in 0..grid.t {
                    let [x, y, t] = grid.coords(i, j, n);
                    w.set(i, j, n, f(x, y, t));
                }
            }
        }
        w
    }

    #[test]
    fn quadratic_in_x() {
        let grid = GridSpec::new(5, 4, 6);
        let s = fd_derivatives(&field_from(grid, |x, _, _| x * x), None, 2, 1).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.u_xx.iter().all(|v| (v - 2.0).abs() < 1e-10));
        assert!(s.u_x.iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert!(s.u_yy.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn linear_in_t() {
        let grid = GridSpec::new(3, 3, 7);
        let s = fd_derivatives(&field_from(grid, |_, _, t| t), None, 1, 1).unwrap();
        assert!(s.u_t.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.u_tt.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn boundary_and_missing_neighbours() {
        let grid = GridSpec::new(4, 4, 5);
        let f = WaveField::zeros(grid);
        assert!(matches!(fd_derivatives(&f, None, 0, 1), Err(Error::Stencil { .. })));
        assert!(fd_derivatives(&f, None, 1, 3).is_err());
        let mut mask = Mask::full(4, 4);
        mask.remove(2, 1);
        assert!(fd_derivatives(&f, Some(&mask), 1, 1).is_err());
        assert!(fd_derivatives(&f, Some(&mask), 1, 2).is_ok());
        assert!(!stencil_available(&mask, 2, 2));
    }

    #[test]
    fn consistent_system_is_recovered() {
        let n = 40;
        let u_t: Vec<f64> = (0..n).map(|k| (k as f64 * 0.7).sin()).collect();
        let lap: Vec<f64> = (0..n).map(|k| (k as f64 * 0.31).cos() + 0.2).collect();
        let stencil = FdStencil {
            u_x: vec![0.0; n],
            u_xx: lap.clone(),
            u_y: vec![0.0; n],
            u_yy: vec![0.0; n],
            u_tt: u_t.iter().zip(&lap).map(|(a, b)| -2.0 * a + 3.0 * b).collect(),
            u_t,
        };
        let est = ols_recover(&stencil);
        assert!(!est.rank_deficient);
        assert!((est.alpha - 2.0).abs() < 1e-10 && (est.c2 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_velocity_is_rank_deficient() {
        let n = 10;
        let lap: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let stencil = FdStencil {
            u_x: vec![0.0; n],
            u_xx: lap.clone(),
            u_y: vec![0.0; n],
            u_yy: vec![0.0; n],
            u_t: vec![0.0; n],
            u_tt: lap.iter().map(|l| 3.0 * l).collect(),
        };
        assert!(ols_recover(&stencil).rank_deficient);
    }

    proptest! {
        #[test]
        fn derivatives_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..100) {
            let grid = GridSpec::new(4, 5, 6);
            let s = seed as f64;
            let u = field_from(grid, |x, y, t| (x * (1.0 + s)).sin() + y * t);
            let w = field_from(grid, |x, y, t| (y - s * t).cos() * x);
            let mut combo = WaveField::zeros(grid);
            for k in 0..combo.data.len() {
                combo.data[k] = a * u.data[k] + b * w.data[k];
            }
            let (fu, fw, fc) = (
                fd_derivatives(&u, None, 1, 2).unwrap(),
                fd_derivatives(&w, None, 1, 2).unwrap(),
                fd_derivatives(&combo, None, 1, 2).unwrap(),
            );
            let parts = |f: &FdStencil| [f.u_x.clone(), f.u_xx.clone(), f.u_y.clone(), f.u_yy.clone(), f.u_t.clone(), f.u_tt.clone()];
            for ((pu, pw), pc) in parts(&fu).iter().zip(parts(&fw).iter()).zip(parts(&fc).iter()) {
                for k in 0..pc.len() {
                    let expect = a * pu[k] + b * pw[k];
                    prop_assert!((pc[k] - expect).abs() <= 1e-8 * (1.0 + expect.abs()));
                }
            }
        }
    }
}
