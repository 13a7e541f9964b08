//! Grids, spatial masks, coefficient maps and measured wave fields.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling of the region of interest: `m1 x m2` locations, `t` frames.
///
/// Row index `i` runs along `x`, column index `j` along `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m1: usize,
    pub m2: usize,
    pub t: usize,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(m1: usize, m2: usize, t: usize) -> Self {
        Self {
            m1,
            m2,
            t,
            dx: 0.1,
            dy: 0.1,
            dt: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 || self.t == 0 {
            return Err(Error::Config(format!(
                "grid extents must be positive, got {}x{}x{}",
                self.m1, self.m2, self.t
            )));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("grid spacings must be positive".into()));
        }
        Ok(())
    }

    pub fn locations(&self) -> usize {
        self.m1 * self.m2
    }

    /// Physical coordinates of sample `(i, j, n)`.
    #[inline]
    pub fn coords(&self, i: usize, j: usize, n: usize) -> [f64; 3] {
        [i as f64 * self.dx, j as f64 * self.dy, n as f64 * self.dt]
    }

    /// Network input for sample `(i, j, n)` under the given scaling.
    pub fn network_input(&self, scaling: InputScaling, i: usize, j: usize, n: usize) -> [f64; 3] {
        let p = self.coords(i, j, n);
        let (scale, shift) = self.input_map(scaling);
        [0, 1, 2].map(|k| scale[k] * (p[k] - shift[k]))
    }

    /// Derivative of each network input with respect to its physical
    /// coordinate; input derivatives of the network are multiplied by these.
    pub fn input_scale(&self, scaling: InputScaling) -> [f64; 3] {
        self.input_map(scaling).0
    }

    fn input_map(&self, scaling: InputScaling) -> ([f64; 3], [f64; 3]) {
        match scaling {
            InputScaling::Physical => ([1.0; 3], [0.0; 3]),
            InputScaling::Centered => {
                let half = |m: usize, d: f64| 0.5 * (m.max(2) - 1) as f64 * d;
                let h = [half(self.m1, self.dx), half(self.m2, self.dy), half(self.t, self.dt)];
                (h.map(|v| 1.0 / v), h)
            }
        }
    }

    /// Parses `"30x30x198"`.
    pub fn parse_dims(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("grid must look like 30x30x198, got {s:?}")))?;
        match parts.as_slice() {
            &[m1, m2, t] => {
                let g = Self::new(m1, m2, t);
                g.validate()?;
                Ok(g)
            }
            _ => Err(Error::Config(format!("grid must have three extents, got {s:?}"))),
        }
    }
}

/// How grid coordinates are presented to the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Metres and seconds.
    Physical,
    /// Each axis mapped affinely onto `[-1, 1]`.
    #[default]
    Centered,
}

/// Sign every entry of a coefficient map must respect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    NonNegative,
    NonPositive,
}

impl Sign {
    /// `+1` for non-negative, `-1` for non-positive.
    pub fn factor(self) -> f64 {
        match self {
            Sign::NonNegative => 1.0,
            Sign::NonPositive => -1.0,
        }
    }

    pub fn admits(self, v: f64) -> bool {
        match self {
            Sign::NonNegative => v >= 0.0,
            Sign::NonPositive => v <= 0.0,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Sign::NonNegative => 0x01,
            Sign::NonPositive => 0x02,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0x01 => Ok(Sign::NonNegative),
            0x02 => Ok(Sign::NonPositive),
            other => Err(Error::Format(format!("unknown sign byte {other:#04x}"))),
        }
    }
}

/// What a coefficient map holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    /// Squared phase speed `c^2`, m^2/s^2.
    SpeedSquared,
    /// Attenuation `alpha`, 1/s.
    Attenuation,
    /// `-alpha`, the coefficient of `U_t` on the right-hand side.
    NegAttenuation,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::SpeedSquared => "c2",
            Quantity::Attenuation => "alpha",
            Quantity::NegAttenuation => "-alpha",
        }
    }

    pub fn natural_sign(self) -> Sign {
        match self {
            Quantity::SpeedSquared | Quantity::Attenuation => Sign::NonNegative,
            Quantity::NegAttenuation => Sign::NonPositive,
        }
    }
}

/// An `m1 x m2` map of one PDE coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub values: DMatrix<f64>,
    pub sign: Sign,
    pub quantity: Quantity,
}

impl CoefficientField {
    pub fn new(values: DMatrix<f64>, quantity: Quantity) -> Self {
        Self {
            values,
            sign: quantity.natural_sign(),
            quantity,
        }
    }

    pub fn constant(m1: usize, m2: usize, value: f64, quantity: Quantity) -> Self {
        Self::new(DMatrix::from_element(m1, m2, value), quantity)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Whether every entry respects the sign tag.
    pub fn respects_sign(&self) -> bool {
        self.values.iter().all(|&v| self.sign.admits(v))
    }

    /// Flips between `alpha` and `-alpha`; other quantities are returned as is.
    pub fn negated_attenuation(&self) -> Self {
        match self.quantity {
            Quantity::Attenuation => Self::new(-&self.values, Quantity::NegAttenuation),
            Quantity::NegAttenuation => Self::new(-&self.values, Quantity::Attenuation),
            Quantity::SpeedSquared => self.clone(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }
}

/// A set of spatial locations on an `m1 x m2` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    m1: usize,
    m2: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(m1: usize, m2: usize) -> Self {
        Self {
            m1,
            m2,
            bits: vec![false; m1 * m2],
        }
    }

    pub fn full(m1: usize, m2: usize) -> Self {
        Self {
            m1,
            m2,
            bits: vec![true; m1 * m2],
        }
    }

    pub fn from_bits(m1: usize, m2: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != m1 * m2 {
            return Err(Error::Dimension(format!(
                "mask of {}x{} needs {} entries, got {}",
                m1,
                m2,
                m1 * m2,
                bits.len()
            )));
        }
        Ok(Self { m1, m2, bits })
    }

    pub fn from_indices(m1: usize, m2: usize, indices: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut mask = Self::empty(m1, m2);
        for (i, j) in indices {
            if i >= m1 || j >= m2 {
                return Err(Error::Dimension(format!("location ({i}, {j}) outside {m1}x{m2} grid")));
            }
            mask.insert(i, j);
        }
        Ok(mask)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m1, self.m2)
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.m1 && j < self.m2 && self.bits[i * self.m2 + j]
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.bits[i * self.m2 + j] = true;
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.bits[i * self.m2 + j] = false;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Locations in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m2 = self.m2;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / m2, k % m2))
    }

    pub fn complement(&self) -> Self {
        Self {
            m1: self.m1,
            m2: self.m2,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &Mask) -> Self {
        assert_eq!(self.dims(), other.dims());
        Self {
            m1: self.m1,
            m2: self.m2,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn intersection(&self, other: &Mask) -> Self {
        assert_eq!(self.dims(), other.dims());
        Self {
            m1: self.m1,
            m2: self.m2,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }
}

/// Field samples `U(i, j, n)` over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    pub grid: GridSpec,
    /// `(row, col, time)` lexicographic order.
    pub data: Vec<f64>,
}

impl WaveField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.m1 * grid.m2 * grid.t],
        }
    }

    pub fn from_data(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        let expected = grid.m1 * grid.m2 * grid.t;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "wave field needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, n: usize) -> usize {
        (i * self.grid.m2 + j) * self.grid.t + n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, n: usize) -> f64 {
        self.data[self.index(i, j, n)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, n: usize, v: f64) {
        let k = self.index(i, j, n);
        self.data[k] = v;
    }

    /// Time series at one location.
    pub fn series(&self, i: usize, j: usize) -> &[f64] {
        let start = self.index(i, j, 0);
        &self.data[start..start + self.grid.t]
    }

    /// Frame `n` as an `m1 x m2` matrix.
    pub fn frame(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.grid.m1, self.grid.m2, |i, j| self.get(i, j, n))
    }

    pub fn set_frame(&mut self, n: usize, frame: &DMatrix<f64>) {
        for i in 0..self.grid.m1 {
            for j in 0..self.grid.m2 {
                self.set(i, j, n, frame[(i, j)]);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Population standard deviation over all samples.
    pub fn std(&self) -> f64 {
        std_dev(&self.data)
    }

    /// Root mean square of frame `n`.
    pub fn frame_rms(&self, n: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grid.m1 {
            for j in 0..self.grid.m2 {
                acc += self.get(i, j, n).powi(2);
            }
        }
        (acc / self.grid.locations() as f64).sqrt()
    }
}

pub(crate) fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
