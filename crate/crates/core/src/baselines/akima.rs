//! Akima interpolation of frames with missing samples.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::Mask;

/// Knot derivatives for the Akima spline through `(xs, ys)`, `xs` strictly
/// increasing, at least 5 knots.
fn akima_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    // secants padded with two extrapolated values at each end
    let mut m = vec![0.0; n + 3];
    for k in 0..n - 1 {
        m[k + 2] = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
    }
    m[1] = 2.0 * m[2] - m[3];
    m[0] = 2.0 * m[1] - m[2];
    m[n + 1] = 2.0 * m[n] - m[n - 1];
    m[n + 2] = 2.0 * m[n + 1] - m[n];
    (0..n)
        .map(|k| {
            let (w1, w2) = ((m[k + 3] - m[k + 2]).abs(), (m[k + 1] - m[k]).abs());
            if w1 + w2 == 0.0 {
                0.5 * (m[k + 1] + m[k + 2])
            } else {
                (w1 * m[k + 1] + w2 * m[k + 2]) / (w1 + w2)
            }
        })
        .collect()
}

/// Knot derivatives from averaged neighbouring secants.
fn secant_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let sec: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
    (0..n)
        .map(|k| match k {
            0 => sec[0],
            _ if k == n - 1 => sec[n - 2],
            _ => 0.5 * (sec[k - 1] + sec[k]),
        })
        .collect()
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

/// Interpolates the samples `(xs, ys)` at `0, 1, ..., len-1`.
///
/// Five or more knots use Akima slopes, two to four use secant slopes.
/// Outside the knot range the end tangent is extended linearly. Fewer than two
/// knots give all NaN.
pub fn interpolate_line(xs: &[usize], ys: &[f64], len: usize) -> Vec<f64> {
    if xs.len() < 2 {
        return vec![f64::NAN; len];
    }
    let xf: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
    let d = if xs.len() >= 5 { akima_slopes(&xf, ys) } else { secant_slopes(&xf, ys) };
    let last = xs.len() - 1;
    let mut seg = 0;
    (0..len)
        .map(|p| {
            let x = p as f64;
            if x <= xf[0] {
                return ys[0] + d[0] * (x - xf[0]);
            }
            if x >= xf[last] {
                return ys[last] + d[last] * (x - xf[last]);
            }
            while xf[seg + 1] < x {
                seg += 1;
            }
            hermite(xf[seg], xf[seg + 1], ys[seg], ys[seg + 1], d[seg], d[seg + 1], x)
        })
        .collect()
}

/// Fills the unmasked entries of `frame`: interpolates every row, then every
/// column, and averages the two passes. Where only one pass lies between its
/// line's end knots, the extrapolating pass is dropped. Available entries are
/// kept exactly.
/// Entries on lines with fewer than two available samples in both directions
/// take the value of the nearest available entry.
pub fn akima_interpolate_frame(frame: &DMatrix<f64>, available: &Mask) -> Result<DMatrix<f64>> {
    let (m1, m2) = frame.shape();
    if available.dims() != (m1, m2) {
        return Err(Error::Dimension(format!(
            "frame is {m1}x{m2}, mask is {:?}",
            available.dims()
        )));
    }
    if available.is_empty() {
        return Err(Error::Empty("frame has no available entries".into()));
    }
    let (rows, row_inside) = line_pass(m1, m2, |i, j| available.contains(i, j).then(|| frame[(i, j)]));
    let (cols_t, col_inside_t) = line_pass(m2, m1, |j, i| available.contains(i, j).then(|| frame[(i, j)]));
    let known: Vec<(usize, usize)> = available.iter().collect();
    Ok(DMatrix::from_fn(m1, m2, |i, j| {
        if available.contains(i, j) {
            return frame[(i, j)];
        }
        let (r, c) = (rows[(i, j)], cols_t[(j, i)]);
        match (r.is_nan(), c.is_nan()) {
            (false, false) => match (row_inside[(i, j)], col_inside_t[(j, i)]) {
                (true, false) => r,
                (false, true) => c,
                _ => 0.5 * (r + c),
            },
            (false, true) => r,
            (true, false) => c,
            (true, true) => {
                let dist = |&(a, b): &(usize, usize)| a.abs_diff(i).pow(2) + b.abs_diff(j).pow(2);
                let &(a, b) = known.iter().min_by_key(|p| dist(p)).expect("mask not empty");
                frame[(a, b)]
            }
        }
    }))
}

/// Interpolates each of `lines` lines of length `len`; also reports which
/// entries lie between the first and last knot of their line.
fn line_pass(
    lines: usize,
    len: usize,
    sample: impl Fn(usize, usize) -> Option<f64>,
) -> (DMatrix<f64>, DMatrix<bool>) {
    let mut out = DMatrix::from_element(lines, len, f64::NAN);
    let mut inside = DMatrix::from_element(lines, len, false);
    for a in 0..lines {
        let (xs, ys): (Vec<usize>, Vec<f64>) = (0..len).filter_map(|b| sample(a, b).map(|v| (b, v))).unzip();
        for (b, v) in interpolate_line(&xs, &ys, len).into_iter().enumerate() {
            out[(a, b)] = v;
        }
        if let (Some(&lo), Some(&hi)) = (xs.first(), xs.last()) {
            for b in lo..=hi {
                inside[(a, b)] = true;
            }
        }
    }
    (out, inside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::wavesim::{sample_mask, MaskKind};
    use proptest::prelude::*;

    #[test]
    fn full_mask_is_identity() {
        let f = DMatrix::from_fn(6, 7, |i, j| (i * 7 + j) as f64 * 0.3 - 1.0);
        assert_eq!(akima_interpolate_frame(&f, &Mask::full(6, 7)).unwrap(), f);
    }

    #[test]
    fn empty_frame_is_an_error() {
        let f = DMatrix::zeros(3, 3);
        assert!(akima_interpolate_frame(&f, &Mask::empty(3, 3)).is_err());
    }

    #[test]
    fn akima_reproduces_lines() {
        let xs = [0, 2, 3, 7, 8, 11];
        let ys: Vec<f64> = xs.iter().map(|&x| 1.5 * x as f64 - 2.0).collect();
        let out = interpolate_line(&xs, &ys, 14);
        for (x, v) in out.iter().enumerate() {
            assert!((v - (1.5 * x as f64 - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn akima_passes_through_knots() {
        let xs = [1, 3, 4, 6, 9, 10];
        let ys = [0.3, -1.0, 2.0, 0.5, 0.5, 4.0];
        let out = interpolate_line(&xs, &ys, 12);
        for (x, y) in xs.iter().zip(ys) {
            assert!((out[*x] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn akima_does_not_overshoot_a_step() {
        let xs = [0, 1, 2, 3, 4, 5, 6, 7];
        let ys = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let dense: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let d = akima_slopes(&dense, &ys);
        // flat neighbourhoods give zero slope at the knots next to the jump
        assert_eq!(d[2], 0.0);
        assert_eq!(d[5], 0.0);
        let out = interpolate_line(&xs, &ys, 8);
        assert!(out.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn sparse_lines_fall_back() {
        assert!(interpolate_line(&[2], &[5.0], 4).iter().all(|v| v.is_nan()));
        let out = interpolate_line(&[1, 3], &[1.0, 3.0], 5);
        assert_eq!(out, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(interpolate_line(&[], &[], 3).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn smooth_frame_half_missing() {
        let (m1, m2) = (30, 30);
        let f = DMatrix::from_fn(m1, m2, |i, j| (0.2 * i as f64).sin() * (0.15 * j as f64).cos());
        let mask = sample_mask(&GridSpec::new(m1, m2, 1), MaskKind::RandomFraction(0.5), 4).unwrap();
        let out = akima_interpolate_frame(&f, &mask).unwrap();
        let err = (&out - &f).amax();
        assert!(err <= 0.1, "max error {err}");
    }

    proptest! {
        #[test]
        fn linear_ramp_is_exact(seed in 0u64..200, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let f = DMatrix::from_fn(12, 10, |i, j| a * i as f64 + b * j as f64 + 0.5);
            let mask = sample_mask(&GridSpec::new(12, 10, 1), MaskKind::RandomFraction(0.5), seed).unwrap();
            let out = akima_interpolate_frame(&f, &mask).unwrap();
            for i in 0..12 {
                for j in 0..10 {
                    if mask.contains(i, j) {
                        prop_assert_eq!(out[(i, j)], f[(i, j)]);
                    }
                    // nearest fill is exact only for constant data
                    let row_knots = (0..10).filter(|&c| mask.contains(i, c)).count();
                    let col_knots = (0..12).filter(|&r| mask.contains(r, j)).count();
                    if row_knots >= 2 || col_knots >= 2 {
                        prop_assert!((out[(i, j)] - f[(i, j)]).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
