//! Data, PDE-residual, given-coefficient and sign losses.
//!
//! The assumed PDE is `u_tt = sum_k Lambda_k * D_k(u)` where `D_k` is fixed by
//! the quantity of term `k`: `u_t` for `-alpha`, `-u_t` for `alpha` and the
//! spatial Laplacian for `c^2`. All losses are plain sums over their points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    eval_jets, eval_values, loss_param_gradient, GradientVector, JetOrder, JetVars, PointGroup, Tape, Var,
};
use crate::error::{Error, Result};
use crate::field::{GridSpec, InputScaling, Quantity};
use crate::lowrank::{CoefficientSet, Entries};
use crate::mlp::MlpParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_g: f64,
    pub w_si: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_f: 0.1, w_g: 1.0, w_si: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_f, self.w_g, self.w_si].iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be non-negative, got {self:?}")))
        }
    }
}

/// The four loss values of one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub u: f64,
    pub f: f64,
    pub g: f64,
    pub si: f64,
}

impl LossParts {
    pub fn total(&self, weights: &LossWeights) -> f64 {
        total_loss(self, weights)
    }

    pub fn is_finite(&self) -> bool {
        [self.u, self.f, self.g, self.si].iter().all(|v| v.is_finite())
    }
}

pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> f64 {
    parts.u + weights.w_f * parts.f + weights.w_g * parts.g + weights.w_si * parts.si
}

/// A measurement at a grid point, with the network input it maps to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub point: [f64; 3],
    pub u: f64,
}

/// Spatial locations and time indices at which the PDE residual is enforced.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub locations: Vec<(usize, usize)>,
    pub times: Vec<usize>,
    /// Time indices sampled per optimizer step; `None` uses every time.
    pub frames_per_step: Option<usize>,
    pub scaling: InputScaling,
}

impl CollocationSet {
    pub fn full(grid: &GridSpec) -> Self {
        Self {
            locations: (0..grid.m1).flat_map(|i| (0..grid.m2).map(move |j| (i, j))).collect(),
            times: (0..grid.t).collect(),
            frames_per_step: None,
            scaling: InputScaling::default(),
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.locations.is_empty() || self.times.is_empty() {
            return Err(Error::Empty("collocation set".into()));
        }
        if let Some(&(i, j)) = self.locations.iter().find(|&&(i, j)| i >= grid.m1 || j >= grid.m2) {
            return Err(Error::Dimension(format!(
                "collocation location ({i}, {j}) outside {}x{} grid",
                grid.m1, grid.m2
            )));
        }
        if let Some(&n) = self.times.iter().find(|&&n| n >= grid.t) {
            return Err(Error::Dimension(format!("collocation time {n} outside {} steps", grid.t)));
        }
        if self.frames_per_step == Some(0) {
            return Err(Error::Config("frames_per_step must be at least 1".into()));
        }
        Ok(())
    }

    /// Network inputs and locations for the given time indices, time-major.
    pub fn points(&self, grid: &GridSpec, times: &[usize]) -> (Vec<[f64; 3]>, Vec<(usize, usize)>) {
        let mut pts = Vec::with_capacity(times.len() * self.locations.len());
        let mut locs = Vec::with_capacity(pts.capacity());
        for &n in times {
            for &(i, j) in &self.locations {
                pts.push(grid.network_input(self.scaling, i, j, n));
                locs.push((i, j));
            }
        }
        (pts, locs)
    }
}

/// Coefficient values given at sparse locations, one list per term.
pub type GivenCoefficients = Vec<Entries>;

/// `D_k(u)` for a term of the given quantity, from plain jet values.
pub fn rhs_derivative(quantity: Quantity, u_t: f64, laplacian: f64) -> f64 {
    match quantity {
        Quantity::NegAttenuation => u_t,
        Quantity::Attenuation => -u_t,
        Quantity::SpeedSquared => laplacian,
    }
}

/// `u_tt - sum_k lambda_k D_k(u)` at one point.
pub fn pde_residual(quantities: &[Quantity], lambdas: &[f64], u_t: f64, u_tt: f64, laplacian: f64) -> f64 {
    u_tt - quantities
        .iter()
        .zip(lambdas)
        .map(|(&q, &l)| l * rhs_derivative(q, u_t, laplacian))
        .sum::<f64>()
}

pub fn loss_u(params: &MlpParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("measurement batch".into()));
    }
    let pts: Vec<[f64; 3]> = samples.iter().map(|s| s.point).collect();
    let values = eval_values(params, &pts);
    Ok(values.iter().zip(samples).map(|(v, s)| (v - s.u).powi(2)).sum())
}

/// Residual loss over every time in `colloc.times`.
pub fn loss_f(params: &MlpParams, coeffs: &CoefficientSet, colloc: &CollocationSet, grid: &GridSpec) -> Result<f64> {
    colloc.validate(grid)?;
    check_grid(coeffs, grid)?;
    let (pts, locs) = colloc.points(grid, &colloc.times);
    let scale = grid.input_scale(colloc.scaling);
    let jets = eval_jets(params, &pts);
    let quantities: Vec<Quantity> = coeffs.terms.iter().map(|t| t.quantity).collect();
    let lambdas = coeffs.composed();
    Ok(jets
        .iter()
        .zip(&locs)
        .map(|(jet, &(i, j))| {
            let jet = jet.rescaled(scale);
            let l: Vec<f64> = lambdas.iter().map(|m| m[(i, j)]).collect();
            pde_residual(&quantities, &l, jet.u_t(), jet.u_tt(), jet.laplacian()).powi(2)
        })
        .sum())
}

pub fn loss_g(coeffs: &CoefficientSet, given: &GivenCoefficients) -> Result<f64> {
    check_given(coeffs, given)?;
    Ok(coeffs
        .terms
        .iter()
        .zip(given)
        .map(|(term, entries)| {
            entries
                .iter()
                .map(|&(a, b, v)| (term.factors.entry(a, b) - v).powi(2))
                .sum::<f64>()
        })
        .sum())
}

/// Sign penalty over the whole grid.
pub fn loss_si(coeffs: &CoefficientSet) -> f64 {
    coeffs
        .terms
        .iter()
        .zip(coeffs.composed())
        .map(|(term, lambda)| {
            let s = term.sign().factor();
            lambda.iter().map(|&v| (-s * v).max(0.0)).sum::<f64>()
        })
        .sum()
}

fn check_grid(coeffs: &CoefficientSet, grid: &GridSpec) -> Result<()> {
    if coeffs.dims() != (grid.m1, grid.m2) {
        return Err(Error::Dimension(format!(
            "coefficients are {:?}, grid is {}x{}",
            coeffs.dims(),
            grid.m1,
            grid.m2
        )));
    }
    Ok(())
}

fn check_given(coeffs: &CoefficientSet, given: &GivenCoefficients) -> Result<()> {
    if given.len() != coeffs.len() {
        return Err(Error::Dimension(format!(
            "{} given lists for {} coefficient terms",
            given.len(),
            coeffs.len()
        )));
    }
    let (m1, m2) = coeffs.dims();
    for entries in given {
        if let Some(&(a, b, _)) = entries.iter().find(|&&(a, b, _)| a >= m1 || b >= m2) {
            return Err(Error::Dimension(format!("given entry ({a}, {b}) outside {m1}x{m2} grid")));
        }
    }
    Ok(())
}

/// Points and scales for one evaluation of the objective.
///
/// Each stochastic sum is multiplied by its scale so that its expectation
/// matches the full-set sum.
#[derive(Clone, Debug)]
pub struct Batch {
    pub samples: Vec<Sample>,
    pub u_scale: f64,
    pub colloc_points: Vec<[f64; 3]>,
    pub colloc_locations: Vec<(usize, usize)>,
    pub f_scale: f64,
    /// Chain-rule factors from network inputs to physical coordinates.
    pub input_scale: [f64; 3],
}

impl Default for Batch {
    fn default() -> Self {
        Self {
            samples: Vec::new(),
            u_scale: 1.0,
            colloc_points: Vec::new(),
            colloc_locations: Vec::new(),
            f_scale: 1.0,
            input_scale: [1.0; 3],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveGradient {
    pub parts: LossParts,
    pub total: f64,
    pub theta: GradientVector,
    /// Gradient with respect to the factor entries, laid out as
    /// [`CoefficientSet::to_flat`].
    pub factors: Vec<f64>,
}

/// Which of the four losses enter the recorded objective.
#[derive(Clone, Copy, Debug)]
struct Terms {
    u: bool,
    f: bool,
    g: bool,
    si: bool,
}

const ALL_TERMS: Terms = Terms { u: true, f: true, g: true, si: true };

/// Weighted total loss and its gradient with respect to the network
/// parameters and every factor entry.
pub fn objective_gradient(
    params: &MlpParams,
    coeffs: &CoefficientSet,
    batch: &Batch,
    given: &GivenCoefficients,
    weights: &LossWeights,
) -> Result<ObjectiveGradient> {
    weights.validate()?;
    check_given(coeffs, given)?;
    if batch.samples.is_empty() {
        return Err(Error::Empty("measurement batch".into()));
    }
    match objective_terms(params, coeffs, batch, given, weights, ALL_TERMS) {
        Ok(out) if out.theta.is_finite() && out.factors.iter().all(|g| g.is_finite()) => return Ok(out),
        Ok(_) | Err(Error::NonDifferentiable { .. }) => {}
        Err(e) => return Err(e),
    }
    // name the first loss whose gradient alone is non-finite
    let single = [
        ("loss_u", Terms { u: true, f: false, g: false, si: false }),
        ("loss_f", Terms { u: false, f: true, g: false, si: false }),
        ("loss_g", Terms { u: false, f: false, g: true, si: false }),
        ("loss_si", Terms { u: false, f: false, g: false, si: true }),
    ];
    for (name, terms) in single {
        let part = objective_terms(params, coeffs, batch, given, weights, terms);
        let bad = match &part {
            Ok(p) => !p.theta.is_finite() || p.factors.iter().any(|g| !g.is_finite()),
            Err(_) => true,
        };
        if bad {
            return Err(Error::NonFiniteGradient { term: name.into() });
        }
    }
    Err(Error::NonFiniteGradient { term: "total".into() })
}

fn objective_terms(
    params: &MlpParams,
    coeffs: &CoefficientSet,
    batch: &Batch,
    given: &GivenCoefficients,
    weights: &LossWeights,
    terms: Terms,
) -> Result<ObjectiveGradient> {
    let (m1, m2) = coeffs.dims();
    let cells = m1 * m2;
    let lambdas = coeffs.composed();
    let quantities: Vec<Quantity> = coeffs.terms.iter().map(|t| t.quantity).collect();
    let signs: Vec<f64> = coeffs.terms.iter().map(|t| t.sign().factor()).collect();
    let data_points: Vec<[f64; 3]> = batch.samples.iter().map(|s| s.point).collect();
    let mut groups = vec![PointGroup { points: &data_points, order: JetOrder::Value }];
    if !batch.colloc_points.is_empty() {
        groups.push(PointGroup { points: &batch.colloc_points, order: JetOrder::Second });
    }

    let mut parts = LossParts::default();
    let grad = loss_param_gradient(params, &groups, |tape: &mut Tape, jets: &[Vec<JetVars>]| {
        // one leaf per coefficient entry, term-major then row-major
        let leaves: Vec<Var> = lambdas
            .iter()
            .flat_map(|m| (0..m1).flat_map(move |i| (0..m2).map(move |j| m[(i, j)])))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|v| tape.leaf(v))
            .collect();
        let lam = |k: usize, i: usize, j: usize| leaves[k * cells + i * m2 + j];

        let mut sq = Vec::with_capacity(batch.samples.len());
        for (jv, s) in jets[0].iter().zip(&batch.samples) {
            let target = tape.constant(s.u);
            let d = tape.sub(jv.value, target);
            sq.push(tape.square(d));
        }
        let su = tape.sum(&sq);
        let lu = tape.scale(su, batch.u_scale);
        parts.u = tape.value(lu);

        let lf = if let Some(colloc) = jets.get(1) {
            let mut sq = Vec::with_capacity(colloc.len());
            let [sx, sy, st] = batch.input_scale;
            for (jv, &(i, j)) in colloc.iter().zip(&batch.colloc_locations) {
                let lap = tape.linear(&[(sx * sx, jv.d2[0]), (sy * sy, jv.d2[1])]);
                let u_t = tape.scale(jv.u_t(), st);
                let u_tt = tape.scale(jv.u_tt(), st * st);
                let mut rhs = Vec::with_capacity(quantities.len());
                for (k, &q) in quantities.iter().enumerate() {
                    let d = match q {
                        Quantity::NegAttenuation => u_t,
                        Quantity::Attenuation => tape.neg(u_t),
                        Quantity::SpeedSquared => lap,
                    };
                    rhs.push(tape.mul(lam(k, i, j), d));
                }
                let r = tape.sum(&rhs);
                let res = tape.sub(u_tt, r);
                sq.push(tape.square(res));
            }
            let s = tape.sum(&sq);
            tape.scale(s, batch.f_scale)
        } else {
            tape.constant(0.0)
        };
        parts.f = tape.value(lf);

        let mut sq = Vec::new();
        for (k, entries) in given.iter().enumerate() {
            for &(a, b, v) in entries {
                let target = tape.constant(v);
                let d = tape.sub(lam(k, a, b), target);
                sq.push(tape.square(d));
            }
        }
        let lg = tape.sum(&sq);
        parts.g = tape.value(lg);

        let mut pen = Vec::with_capacity(leaves.len());
        for (k, &s) in signs.iter().enumerate() {
            for &leaf in &leaves[k * cells..(k + 1) * cells] {
                let flipped = tape.scale(leaf, -s);
                pen.push(tape.relu(flipped));
            }
        }
        let lsi = tape.sum(&pen);
        parts.si = tape.value(lsi);

        let w = |on: bool, w: f64| if on { w } else { 0.0 };
        tape.linear(&[
            (w(terms.u, 1.0), lu),
            (w(terms.f, weights.w_f), lf),
            (w(terms.g, weights.w_g), lg),
            (w(terms.si, weights.w_si), lsi),
        ])
    })?;

    let mut factors = Vec::with_capacity(coeffs.factor_count());
    for (k, term) in coeffs.terms.iter().enumerate() {
        let g = DMatrix::from_fn(m1, m2, |i, j| grad.leaves[k * cells + i * m2 + j]);
        let (gu, gv) = term.factors.pullback(&g);
        factors.extend_from_slice(gu.as_slice());
        factors.extend_from_slice(gv.as_slice());
    }
    Ok(ObjectiveGradient {
        parts,
        total: grad.loss,
        theta: grad.theta,
        factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::eval_jet;
    use crate::lowrank::{CoefficientTerm, FactorPair};
    use crate::mlp::{forward, init_params, MlpConfig};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn set_from(lambdas: &[(Quantity, DMatrix<f64>)]) -> CoefficientSet {
        // exact rank-full factorisation Lambda = Lambda * I
        CoefficientSet::new(
            lambdas
                .iter()
                .map(|(q, m)| CoefficientTerm {
                    factors: FactorPair::new(m.clone(), DMatrix::identity(m.ncols(), m.ncols())).unwrap(),
                    quantity: *q,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn total_loss_examples() {
        let ones = LossParts { u: 1.0, f: 1.0, g: 1.0, si: 1.0 };
        assert!((total_loss(&ones, &LossWeights::default()) - 3.1).abs() < 1e-15);
        assert_eq!(total_loss(&LossParts::default(), &LossWeights::default()), 0.0);
        let parts = LossParts { u: 2.5, f: 7.0, g: 3.0, si: 1.0 };
        let zero = LossWeights { w_f: 0.0, w_g: 0.0, w_si: 0.0 };
        assert_eq!(total_loss(&parts, &zero), 2.5);
        assert!(LossWeights { w_f: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn data_loss_examples() {
        let params = MlpParams::zeros(MlpConfig::toy());
        let samples: Vec<Sample> = (0..3)
            .map(|k| Sample { point: [k as f64, 0.5, 0.1], u: 1.0 })
            .collect();
        assert_eq!(loss_u(&params, &samples).unwrap(), 3.0);
        assert!(loss_u(&params, &[]).is_err());

        let net = init_params(MlpConfig::toy(), 4);
        let own: Vec<Sample> = (0..20)
            .map(|k| {
                let p = [0.1 * k as f64, 0.3, 0.05 * k as f64];
                Sample { point: p, u: forward(&net, p) }
            })
            .collect();
        assert!(loss_u(&net, &own).unwrap() < 1e-24);
    }

    #[test]
    fn data_loss_matches_forward() {
        let net = init_params(MlpConfig::toy(), 8);
        let samples: Vec<Sample> = (0..300)
            .map(|k| Sample { point: [0.01 * k as f64, 1.0 - 0.002 * k as f64, 0.3], u: (k as f64).sin() })
            .collect();
        let direct: f64 = samples.iter().map(|s| (forward(&net, s.point) - s.u).powi(2)).sum();
        let got = loss_u(&net, &samples).unwrap();
        assert!((got - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn analytic_solution_has_zero_residual() {
        // u = sin(pi x) sin(pi y) cos(w t) solves u_tt = c2 lap u with c2 = w^2 / (2 pi^2)
        let w: f64 = 3.7;
        let c2 = w * w / (2.0 * PI * PI);
        let mut worst: f64 = 0.0;
        for k in 0..50 {
            let (x, y, t) = (0.013 * k as f64, 0.71 - 0.01 * k as f64, 0.02 * k as f64);
            let (sx, sy, ct) = ((PI * x).sin(), (PI * y).sin(), (w * t).cos());
            let u_tt = -w * w * sx * sy * ct;
            let lap = -2.0 * PI * PI * sx * sy * ct;
            let u_t = -w * sx * sy * (w * t).sin();
            let r = pde_residual(&[Quantity::NegAttenuation, Quantity::SpeedSquared], &[0.0, c2], u_t, u_tt, lap);
            worst = worst.max(r * r);
        }
        assert!(worst <= 1e-20, "{worst}");
    }

    #[test]
    fn zero_coefficients_leave_u_tt() {
        let net = init_params(MlpConfig::toy(), 2);
        let grid = GridSpec::new(3, 4, 5);
        let coeffs = set_from(&[(Quantity::SpeedSquared, DMatrix::zeros(3, 4))]);
        let colloc = CollocationSet::full(&grid);
        let (pts, _) = colloc.points(&grid, &colloc.times);
        let st = grid.input_scale(colloc.scaling)[2];
        let expected: f64 = pts.iter().map(|&p| (st * st * eval_jet(&net, p).unwrap().u_tt()).powi(2)).sum();
        let got = loss_f(&net, &coeffs, &colloc, &grid).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn collocation_outside_grid() {
        let net = init_params(MlpConfig::toy(), 2);
        let grid = GridSpec::new(3, 4, 5);
        let coeffs = set_from(&[(Quantity::SpeedSquared, DMatrix::zeros(3, 4))]);
        let mut colloc = CollocationSet::full(&grid);
        colloc.locations.push((3, 0));
        assert!(matches!(loss_f(&net, &coeffs, &colloc, &grid), Err(Error::Dimension(_))));
        let mut colloc = CollocationSet::full(&grid);
        colloc.times.push(5);
        assert!(loss_f(&net, &coeffs, &colloc, &grid).is_err());
    }

    #[test]
    fn given_loss_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let coeffs = set_from(&[(Quantity::SpeedSquared, m)]);
        assert_eq!(loss_g(&coeffs, &vec![vec![(0, 1, 2.0), (1, 1, 4.0)]]).unwrap(), 0.0);
        assert_eq!(loss_g(&coeffs, &vec![vec![(1, 0, 5.0)]]).unwrap(), 4.0);
        assert!(loss_g(&coeffs, &vec![vec![(2, 0, 5.0)]]).is_err());
        assert!(loss_g(&coeffs, &vec![]).is_err());
    }

    #[test]
    fn given_loss_matches_composed_factors() {
        let coeffs = CoefficientSet::init(6, 5, &[(Quantity::NegAttenuation, 2), (Quantity::SpeedSquared, 3)], 3).unwrap();
        let given: GivenCoefficients = vec![
            vec![(0, 0, 0.3), (5, 4, -0.1), (2, 3, 0.0)],
            vec![(1, 1, 2.0), (4, 0, 1.5)],
        ];
        let composed = coeffs.composed();
        let direct: f64 = given
            .iter()
            .enumerate()
            .flat_map(|(k, e)| e.iter().map(move |&(a, b, v)| (k, a, b, v)))
            .map(|(k, a, b, v)| (composed[k][(a, b)] - v).powi(2))
            .sum();
        assert!((loss_g(&coeffs, &given).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn sign_loss_examples() {
        let mut neg = DMatrix::from_element(2, 2, -0.2);
        let pos = DMatrix::from_element(2, 2, 1.0);
        let ok = set_from(&[(Quantity::NegAttenuation, neg.clone()), (Quantity::SpeedSquared, pos.clone())]);
        assert_eq!(loss_si(&ok), 0.0);
        neg[(1, 0)] = 0.5;
        assert_eq!(loss_si(&set_from(&[(Quantity::NegAttenuation, neg.clone())])), 0.5);
        let mut bad = pos.clone();
        bad[(0, 1)] = -1.2;
        assert_eq!(loss_si(&set_from(&[(Quantity::SpeedSquared, bad)])), 1.2);
    }

    #[test]
    fn trained_field_prefers_true_coefficients() {
        // the analytic standing wave plays the role of a perfectly trained net
        let w: f64 = 2.0;
        let c2 = w * w / (2.0 * PI * PI);
        let residual = |scale: f64| -> f64 {
            (0..40)
                .map(|k| {
                    let (x, y, t) = (0.02 * k as f64, 0.3, 0.05 * k as f64);
                    let (sx, sy, ct) = ((PI * x).sin(), (PI * y).sin(), (w * t).cos());
                    let r = pde_residual(
                        &[Quantity::SpeedSquared],
                        &[scale * c2],
                        0.0,
                        -w * w * sx * sy * ct,
                        -2.0 * PI * PI * sx * sy * ct,
                    );
                    r * r
                })
                .sum()
        };
        assert!(residual(1.0) < 1e-6 * residual(1.5));
    }

    fn toy_problem(seed: u64) -> (MlpParams, CoefficientSet, Batch, GivenCoefficients) {
        let net = init_params(MlpConfig::new(3, 6).unwrap(), seed);
        let grid = GridSpec::new(4, 3, 6);
        // factors scaled so that some entries violate their signs
        let mut coeffs =
            CoefficientSet::init(4, 3, &[(Quantity::NegAttenuation, 2), (Quantity::SpeedSquared, 2)], seed).unwrap();
        let flat: Vec<f64> = coeffs.to_flat().iter().map(|v| 5.0 * v + 0.05).collect();
        coeffs.assign_flat(&flat);
        let samples = (0..10)
            .map(|k| Sample { point: grid.coords(k % 4, k % 3, k % 6), u: 0.1 * k as f64 })
            .collect();
        let colloc = CollocationSet::full(&grid);
        let (colloc_points, colloc_locations) = colloc.points(&grid, &[1, 4]);
        let batch = Batch {
            samples,
            u_scale: 2.0,
            colloc_points,
            colloc_locations,
            f_scale: 3.0,
            input_scale: grid.input_scale(InputScaling::Centered),
        };
        let given = vec![vec![(0, 0, -0.2), (3, 2, -0.1)], vec![(1, 1, 1.0)]];
        (net, coeffs, batch, given)
    }

    fn objective_value(params: &MlpParams, coeffs: &CoefficientSet, batch: &Batch, given: &GivenCoefficients) -> f64 {
        let w = LossWeights::default();
        let u = batch.u_scale * loss_u(params, &batch.samples).unwrap();
        let quantities: Vec<Quantity> = coeffs.terms.iter().map(|t| t.quantity).collect();
        let lam = coeffs.composed();
        let jets = eval_jets(params, &batch.colloc_points);
        let f: f64 = batch.f_scale
            * jets
                .iter()
                .zip(&batch.colloc_locations)
                .map(|(jet, &(i, j))| {
                    let jet = jet.rescaled(batch.input_scale);
                    let l: Vec<f64> = lam.iter().map(|m| m[(i, j)]).collect();
                    pde_residual(&quantities, &l, jet.u_t(), jet.u_tt(), jet.laplacian()).powi(2)
                })
                .sum::<f64>();
        let parts = LossParts { u, f, g: loss_g(coeffs, given).unwrap(), si: loss_si(coeffs) };
        total_loss(&parts, &w)
    }

    #[test]
    fn objective_parts_match_standalone_losses() {
        let (net, coeffs, batch, given) = toy_problem(1);
        let out = objective_gradient(&net, &coeffs, &batch, &given, &LossWeights::default()).unwrap();
        assert!(out.parts.si > 0.0);
        assert!((out.parts.g - loss_g(&coeffs, &given).unwrap()).abs() < 1e-12);
        assert!((out.parts.si - loss_si(&coeffs)).abs() < 1e-12);
        let direct = objective_value(&net, &coeffs, &batch, &given);
        assert!((out.total - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let (net, coeffs, batch, given) = toy_problem(7);
        let out = objective_gradient(&net, &coeffs, &batch, &given, &LossWeights::default()).unwrap();
        let h = 1e-6;

        let theta = net.to_flat();
        let mut fd = vec![0.0; theta.len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let mut p = net.clone();
            let mut t = theta.clone();
            t[k] += h;
            p.assign_flat(&t);
            let up = objective_value(&p, &coeffs, &batch, &given);
            t[k] -= 2.0 * h;
            p.assign_flat(&t);
            let down = objective_value(&p, &coeffs, &batch, &given);
            *slot = (up - down) / (2.0 * h);
        }
        assert_rel_close(out.theta.as_slice(), &fd, 1e-4);

        let flat = coeffs.to_flat();
        let mut fd = vec![0.0; flat.len()];
        for (k, slot) in fd.iter_mut().enumerate() {
            let mut c = coeffs.clone();
            let mut f = flat.clone();
            f[k] += h;
            c.assign_flat(&f);
            let up = objective_value(&net, &c, &batch, &given);
            f[k] -= 2.0 * h;
            c.assign_flat(&f);
            let down = objective_value(&net, &c, &batch, &given);
            *slot = (up - down) / (2.0 * h);
        }
        assert_rel_close(&out.factors, &fd, 1e-4);
    }

    fn assert_rel_close(a: &[f64], b: &[f64], tol: f64) {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        assert!(diff <= tol * norm, "gradient mismatch {diff} vs norm {norm}");
    }

    #[test]
    fn non_finite_gradient_names_the_term() {
        let (net, coeffs, mut batch, given) = toy_problem(2);
        batch.samples[0].u = f64::NAN;
        match objective_gradient(&net, &coeffs, &batch, &given, &LossWeights::default()) {
            Err(Error::NonFiniteGradient { term }) => assert_eq!(term, "loss_u"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(seed in 0u64..300) {
            let (net, coeffs, batch, given) = toy_problem(seed);
            let out = objective_gradient(&net, &coeffs, &batch, &given, &LossWeights::default()).unwrap();
            let p = out.parts;
            prop_assert!(p.u >= 0.0 && p.f >= 0.0 && p.g >= 0.0 && p.si >= 0.0);
        }

        #[test]
        fn sign_loss_zero_iff_signs_hold(seed in 0u64..300, shift in -0.3f64..0.3) {
            let mut coeffs = CoefficientSet::init(5, 4, &[(Quantity::NegAttenuation, 2), (Quantity::SpeedSquared, 1)], seed).unwrap();
            let flat: Vec<f64> = coeffs.to_flat().iter().map(|v| v + shift).collect();
            coeffs.assign_flat(&flat);
            let holds = coeffs.fields().iter().all(|f| f.respects_sign());
            prop_assert_eq!(loss_si(&coeffs) == 0.0, holds);
        }

        #[test]
        fn total_is_monotone_in_each_part(
            u in 0.0f64..10.0, f in 0.0f64..10.0, g in 0.0f64..10.0, si in 0.0f64..10.0,
            bump in 0.0f64..5.0, which in 0usize..4,
        ) {
            let w = LossWeights::default();
            let base = LossParts { u, f, g, si };
            let mut more = base;
            match which {
                0 => more.u += bump,
                1 => more.f += bump,
                2 => more.g += bump,
                _ => more.si += bump,
            }
            prop_assert!(total_loss(&more, &w) >= total_loss(&base, &w));
        }
    }
}
