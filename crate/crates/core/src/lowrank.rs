//! Factorised coefficient estimates `Lambda_k = U_k V_k^T` and mask algebra.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Mask, Quantity, Sign};

/// Standard deviation of the initial factor entries.
pub const FACTOR_INIT_STD: f64 = 0.1;

/// `U` is `m1 x r`, `V` is `m2 x r`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::Dimension(format!(
                "factor column counts differ: U has {}, V has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        Ok(Self { u, v })
    }

    pub fn rank_budget(&self) -> usize {
        self.u.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    /// Number of scalar entries in `U` and `V`.
    pub fn len(&self) -> usize {
        self.u.len() + self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `U V^T`.
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    /// Entry `(a, b)` of the product without forming it.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        (0..self.rank_budget()).map(|i| self.u[(a, i)] * self.v[(b, i)]).sum()
    }

    /// Chain rule from `d loss / d Lambda` to `(d loss / d U, d loss / d V)`.
    pub fn pullback(&self, grad_lambda: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (grad_lambda * &self.v, grad_lambda.transpose() * &self.u)
    }
}

/// `U_k V_k^T` as a coefficient map.
pub fn compose(pair: &FactorPair, quantity: Quantity) -> CoefficientField {
    CoefficientField::new(pair.product(), quantity)
}

/// Entries i.i.d. `N(0, 0.1^2)`.
pub fn init_factors(m1: usize, m2: usize, rank: usize, seed: u64) -> Result<FactorPair> {
    if rank == 0 {
        return Err(Error::Config("rank budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, FACTOR_INIT_STD).expect("positive std");
    let u = DMatrix::from_fn(m1, rank, |_, _| normal.sample(&mut rng));
    let v = DMatrix::from_fn(m2, rank, |_, _| normal.sample(&mut rng));
    FactorPair::new(u, v)
}

/// One right-hand-side term: its factor pair and what it represents.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTerm {
    pub factors: FactorPair,
    pub quantity: Quantity,
}

impl CoefficientTerm {
    pub fn sign(&self) -> Sign {
        self.quantity.natural_sign()
    }

    pub fn label(&self) -> &'static str {
        self.quantity.label()
    }
}

/// All coefficient estimates of the assumed PDE, one term per right-hand-side
/// derivative, in term order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    pub terms: Vec<CoefficientTerm>,
}

impl CoefficientSet {
    pub fn new(terms: Vec<CoefficientTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("need at least one coefficient term".into()));
        }
        let dims = terms[0].factors.dims();
        if terms.iter().any(|t| t.factors.dims() != dims) {
            return Err(Error::Dimension("coefficient terms cover different grids".into()));
        }
        Ok(Self { terms })
    }

    /// Randomly initialised factors for the given quantities and rank budgets.
    pub fn init(m1: usize, m2: usize, spec: &[(Quantity, usize)], seed: u64) -> Result<Self> {
        let terms = spec
            .iter()
            .enumerate()
            .map(|(k, &(quantity, rank))| {
                Ok(CoefficientTerm {
                    factors: init_factors(m1, m2, rank, seed.wrapping_add(1000 * k as u64 + 1))?,
                    quantity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.terms[0].factors.dims()
    }

    /// Dense estimates `Lambda_k`, recomputed from the factors.
    pub fn composed(&self) -> Vec<DMatrix<f64>> {
        self.terms.iter().map(|t| t.factors.product()).collect()
    }

    pub fn fields(&self) -> Vec<CoefficientField> {
        self.terms.iter().map(|t| compose(&t.factors, t.quantity)).collect()
    }

    pub fn factor_count(&self) -> usize {
        self.terms.iter().map(|t| t.factors.len()).sum()
    }

    /// Factor entries flattened as `U_1, V_1, U_2, ...` (nalgebra storage order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.factor_count());
        for t in &self.terms {
            out.extend_from_slice(t.factors.u.as_slice());
            out.extend_from_slice(t.factors.v.as_slice());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in &mut self.terms {
            let nu = t.factors.u.len();
            t.factors.u.as_mut_slice().copy_from_slice(&flat[off..off + nu]);
            off += nu;
            let nv = t.factors.v.len();
            t.factors.v.as_mut_slice().copy_from_slice(&flat[off..off + nv]);
            off += nv;
        }
    }
}

/// Distinct rows, distinct columns and size of a mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coverage {
    pub distinct_rows: usize,
    pub distinct_cols: usize,
    pub count: usize,
}

pub fn coverage_stats(mask: &Mask) -> Coverage {
    let (m1, m2) = mask.dims();
    let mut rows = vec![false; m1];
    let mut cols = vec![false; m2];
    let mut count = 0;
    for (i, j) in mask.iter() {
        rows[i] = true;
        cols[j] = true;
        count += 1;
    }
    Coverage {
        distinct_rows: rows.iter().filter(|&&b| b).count(),
        distinct_cols: cols.iter().filter(|&&b| b).count(),
        count,
    }
}

/// A sparse `(row, col, value)` list.
pub type Entries = Vec<(usize, usize, f64)>;

/// `P_Omega(X)` as the list of entries inside the mask.
pub fn project(mask: &Mask, field: &DMatrix<f64>) -> Result<Entries> {
    if mask.dims() != field.shape() {
        return Err(Error::Dimension(format!(
            "mask is {:?}, field is {:?}",
            mask.dims(),
            field.shape()
        )));
    }
    Ok(mask.iter().map(|(i, j)| (i, j, field[(i, j)])).collect())
}
