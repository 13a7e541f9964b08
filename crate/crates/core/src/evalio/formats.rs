//! Little-endian binary files for wave fields, coefficient maps, masks and
//! training checkpoints, plus CSV export of matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{CoefficientField, GridSpec, Mask, Quantity, Sign, WaveField};
use crate::lowrank::{CoefficientSet, CoefficientTerm, FactorPair};
use crate::mlp::{MlpConfig, MlpParams};

pub const WAVE_MAGIC: &[u8; 4] = b"SDPW";
pub const COEFF_MAGIC: &[u8; 4] = b"SDPC";
pub const MASK_MAGIC: &[u8; 4] = b"SDPM";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SDPT";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(BufWriter<File>);

impl Writer {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self(BufWriter::new(File::create(path)?)))
    }
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        Ok(self.0.write_all(b)?)
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.bytes(&v.to_le_bytes())
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for v in vs {
            self.bytes(&v.to_le_bytes())?;
        }
        Ok(())
    }
    fn finish(mut self) -> Result<()> {
        Ok(self.0.flush()?)
    }
}

struct Reader(BufReader<File>);

impl Reader {
    fn open(path: &Path, magic: &[u8; 4]) -> Result<Self> {
        let mut r = Self(BufReader::new(File::open(path)?));
        let mut m = [0u8; 4];
        r.fill(&mut m)?;
        if &m != magic {
            return Err(Error::Format(format!(
                "{}: expected magic {:?}, found {:?}",
                path.display(),
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&m)
            )));
        }
        Ok(r)
    }
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.0.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
            _ => Error::Io(e),
        })
    }
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn version(&mut self) -> Result<()> {
        match self.u32()? {
            v if v == FORMAT_VERSION as usize => Ok(()),
            v => Err(Error::Format(format!("unsupported format version {v}"))),
        }
    }
    fn end(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.0.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = &f64> {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| &m[(i, j)]))
}

pub fn write_wavefield(path: &Path, field: &WaveField) -> Result<()> {
    let g = &field.grid;
    let mut w = Writer::create(path)?;
    w.bytes(WAVE_MAGIC)?;
    w.u32(FORMAT_VERSION as usize)?;
    w.u32(g.m1)?;
    w.u32(g.m2)?;
    w.u32(g.t)?;
    w.f64s(&[g.dx, g.dy, g.dt])?;
    w.f64s(&field.data)?;
    w.finish()
}

pub fn read_wavefield(path: &Path) -> Result<WaveField> {
    let mut r = Reader::open(path, WAVE_MAGIC)?;
    r.version()?;
    let (m1, m2, t) = (r.u32()?, r.u32()?, r.u32()?);
    let (dx, dy, dt) = (r.f64()?, r.f64()?, r.f64()?);
    let grid = GridSpec { m1, m2, t, dx, dy, dt };
    grid.validate()?;
    let data = r.f64s(m1 * m2 * t)?;
    r.end()?;
    WaveField::from_data(grid, data)
}

pub fn write_coefficients(path: &Path, field: &CoefficientField) -> Result<()> {
    let (m1, m2) = field.dims();
    let mut w = Writer::create(path)?;
    w.bytes(COEFF_MAGIC)?;
    w.u32(m1)?;
    w.u32(m2)?;
    w.bytes(&[field.sign.to_byte()])?;
    w.f64s(row_major(&field.values))?;
    w.finish()
}

/// Reads a coefficient map; the stored sign must match `quantity`.
pub fn read_coefficients(path: &Path, quantity: Quantity) -> Result<CoefficientField> {
    let mut r = Reader::open(path, COEFF_MAGIC)?;
    let (m1, m2) = (r.u32()?, r.u32()?);
    let sign = Sign::from_byte(r.u8()?)?;
    if sign != quantity.natural_sign() {
        return Err(Error::Format(format!("stored sign {sign:?} does not fit {}", quantity.label())));
    }
    let values = DMatrix::from_row_slice(m1, m2, &r.f64s(m1 * m2)?);
    r.end()?;
    Ok(CoefficientField::new(values, quantity))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let (m1, m2) = mask.dims();
    let mut w = Writer::create(path)?;
    w.bytes(MASK_MAGIC)?;
    w.u32(m1)?;
    w.u32(m2)?;
    let bytes: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
    w.bytes(&bytes)?;
    w.finish()
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let mut r = Reader::open(path, MASK_MAGIC)?;
    let (m1, m2) = (r.u32()?, r.u32()?);
    let mut bytes = vec![0u8; m1 * m2];
    r.fill(&mut bytes)?;
    r.end()?;
    let bits = bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Format(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<_>>()?;
    Mask::from_bits(m1, m2, bits)
}

fn quantity_byte(q: Quantity) -> u8 {
    match q {
        Quantity::SpeedSquared => 0,
        Quantity::Attenuation => 1,
        Quantity::NegAttenuation => 2,
    }
}

fn quantity_from_byte(b: u8) -> Result<Quantity> {
    match b {
        0 => Ok(Quantity::SpeedSquared),
        1 => Ok(Quantity::Attenuation),
        2 => Ok(Quantity::NegAttenuation),
        other => Err(Error::Format(format!("unknown quantity byte {other}"))),
    }
}

/// Network parameters and coefficient factors.
///
/// Layout after the magic and version: layer count and hidden width (u32),
/// parameter count (u32) and the parameters in flat gradient order; then the
/// term count, `m1` and `m2` (u32), and per term a quantity byte, `r_k` (u32),
/// `U` and `V` row-major.
pub fn write_checkpoint(path: &Path, params: &MlpParams, coeffs: &CoefficientSet) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u32(FORMAT_VERSION as usize)?;
    w.u32(params.config.layer_count)?;
    w.u32(params.config.hidden_width)?;
    let flat = params.to_flat();
    w.u32(flat.len())?;
    w.f64s(&flat)?;
    let (m1, m2) = coeffs.dims();
    w.u32(coeffs.len())?;
    w.u32(m1)?;
    w.u32(m2)?;
    for term in &coeffs.terms {
        w.bytes(&[quantity_byte(term.quantity)])?;
        w.u32(term.factors.rank_budget())?;
        w.f64s(row_major(&term.factors.u))?;
        w.f64s(row_major(&term.factors.v))?;
    }
    w.finish()
}

pub fn read_checkpoint(path: &Path) -> Result<(MlpParams, CoefficientSet)> {
    let mut r = Reader::open(path, CHECKPOINT_MAGIC)?;
    r.version()?;
    let config = MlpConfig::new(r.u32()?, r.u32()?)?;
    let n = r.u32()?;
    let params = MlpParams::from_flat(config, &r.f64s(n)?)?;
    let (k, m1, m2) = (r.u32()?, r.u32()?, r.u32()?);
    let mut terms = Vec::with_capacity(k);
    for _ in 0..k {
        let quantity = quantity_from_byte(r.u8()?)?;
        let rank = r.u32()?;
        let u = DMatrix::from_row_slice(m1, rank, &r.f64s(m1 * rank)?);
        let v = DMatrix::from_row_slice(m2, rank, &r.f64s(m2 * rank)?);
        terms.push(CoefficientTerm { factors: FactorPair::new(u, v)?, quantity });
    }
    r.end()?;
    Ok((params, CoefficientSet::new(terms)?))
}

/// Writes `m` as CSV without a header, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}
