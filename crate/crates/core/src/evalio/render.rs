//! Binary PPM (P6) heatmaps with a blue-white-red colour map.
//!
//! Matrix row `i` is image row `i`, column `j` is image column `j`. Convert
//! with e.g. `magick field.ppm field.png`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::Mask;

/// Colour of `v` on a linear map: `lo` is blue `(0, 0, 255)`, the midpoint
/// white, `hi` red `(255, 0, 0)`. Values outside the range are clamped.
pub fn colormap(v: f64, lo: f64, hi: f64) -> [u8; 3] {
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let ramp = |s: f64| (255.0 * s).round() as u8;
    if t <= 0.5 {
        let s = t / 0.5;
        [ramp(s), ramp(s), 255]
    } else {
        let s = (1.0 - t) / 0.5;
        [255, ramp(s), ramp(s)]
    }
}

/// One heatmap panel; entries outside `mask` are drawn black.
#[derive(Clone, Copy, Debug)]
pub struct Panel<'a> {
    pub values: &'a DMatrix<f64>,
    pub mask: Option<&'a Mask>,
}

/// Range of the visible entries of all panels.
pub fn shared_range(panels: &[Panel]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in panels {
        for i in 0..p.values.nrows() {
            for j in 0..p.values.ncols() {
                if p.mask.is_none_or(|m| m.contains(i, j)) {
                    lo = lo.min(p.values[(i, j)]);
                    hi = hi.max(p.values[(i, j)]);
                }
            }
        }
    }
    (lo, hi)
}

/// Draws `panels` left to right, separated by a one-pixel grey gap, each
/// entry as a `pixel x pixel` block. `range` defaults to [`shared_range`].
pub fn render_panels(path: &Path, panels: &[Panel], range: Option<(f64, f64)>, pixel: usize) -> Result<()> {
    let first = panels.first().ok_or_else(|| Error::Empty("no panels to render".into()))?;
    let (rows, cols) = first.values.shape();
    if pixel == 0 || rows == 0 || cols == 0 {
        return Err(Error::Config("heatmap needs a non-empty matrix and pixel size >= 1".into()));
    }
    for p in panels {
        if p.values.shape() != (rows, cols) || p.mask.is_some_and(|m| m.dims() != (rows, cols)) {
            return Err(Error::Dimension("heatmap panels must share one shape".into()));
        }
        let visible = |i, j| p.mask.is_none_or(|m| m.contains(i, j));
        if (0..rows).any(|i| (0..cols).any(|j| visible(i, j) && !p.values[(i, j)].is_finite())) {
            return Err(Error::Config("heatmap entries must be finite".into()));
        }
    }
    let (lo, hi) = range.unwrap_or_else(|| shared_range(panels));
    let width = panels.len() * cols * pixel + panels.len() - 1;
    let height = rows * pixel;
    let mut img = vec![128u8; width * height * 3];
    for (k, p) in panels.iter().enumerate() {
        let x0 = k * (cols * pixel + 1);
        for i in 0..rows {
            for j in 0..cols {
                let rgb = match p.mask {
                    Some(m) if !m.contains(i, j) => [0, 0, 0],
                    _ => colormap(p.values[(i, j)], lo, hi),
                };
                for dy in 0..pixel {
                    for dx in 0..pixel {
                        let at = ((i * pixel + dy) * width + x0 + j * pixel + dx) * 3;
                        img[at..at + 3].copy_from_slice(&rgb);
                    }
                }
            }
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(&img)?;
    f.flush()?;
    Ok(())
}

pub fn render_heatmap(path: &Path, values: &DMatrix<f64>, mask: Option<&Mask>, range: Option<(f64, f64)>) -> Result<()> {
    render_panels(path, &[Panel { values, mask }], range, 1)
}
