//! Synthetic media and measurements: low-rank coefficient maps, the damped
//! wave equation `U_tt + alpha U_t - c^2 lap U = 0` stepped explicitly, additive
//! noise and measurement/given-coefficient masks.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, GridSpec, Mask, Quantity, WaveField};

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank test used for generated fields: `sigma_rank / sigma_1 > 1e-6`
/// and `sigma_{rank+1} / sigma_1 < 1e-10`.
pub fn has_exact_rank(m: &DMatrix<f64>, rank: usize) -> bool {
    let s = singular_values(m);
    if s.is_empty() || s[0] == 0.0 {
        return rank == 0;
    }
    let lead = s[0];
    let kept = rank == 0 || s.get(rank - 1).is_some_and(|&v| v / lead > 1e-6);
    let dropped = s.get(rank).is_none_or(|&v| v / lead < 1e-10);
    kept && dropped
}

fn smooth_vector(len: usize, freq: f64, phase: f64) -> Vec<f64> {
    let span = (len.max(2) - 1) as f64;
    (0..len)
        .map(|i| (std::f64::consts::PI * freq * i as f64 / span + phase).cos())
        .collect()
}

/// A coefficient map of exact rank `rank` with entries spanning `[lo, hi]`.
///
/// Built from a constant term plus `rank - 1` outer products of low-frequency
/// cosines, then mapped affinely onto the range; the offset lands on the
/// constant term so the rank is unchanged. A rank-1 map with `lo < hi` is the
/// outer product of two one-signed ramps instead.
pub fn make_lowrank_field(
    grid: &GridSpec,
    rank: usize,
    (lo, hi): (f64, f64),
    quantity: Quantity,
    seed: u64,
) -> Result<CoefficientField> {
    let (m1, m2) = (grid.m1, grid.m2);
    if rank == 0 || rank > m1.min(m2) {
        return Err(Error::Config(format!(
            "rank {rank} outside 1..={} for a {m1}x{m2} grid",
            m1.min(m2)
        )));
    }
    if !(lo <= hi) {
        return Err(Error::Config(format!("empty value range [{lo}, {hi}]")));
    }
    let sign = quantity.natural_sign();
    if !sign.admits(lo) || !sign.admits(hi) {
        return Err(Error::Config(format!(
            "range [{lo}, {hi}] is incompatible with {:?} {}",
            sign,
            quantity.label()
        )));
    }
    if lo == hi {
        if rank != 1 {
            return Err(Error::Config(format!(
                "a constant range [{lo}, {hi}] only admits rank 1, asked for {rank}"
            )));
        }
        return Ok(CoefficientField::constant(m1, m2, lo, quantity));
    }

    for attempt in 0..32u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let values = if rank == 1 {
            // |v| = p q^T with p, q sweeping [sqrt|lo|, sqrt|hi|] end to end
            let (a, b) = (lo.abs().min(hi.abs()).sqrt(), lo.abs().max(hi.abs()).sqrt());
            let ramp = |len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
                let raw = smooth_vector(len, rng.random_range(0.6..1.0), rng.random_range(0.0..0.3));
                let (mn, mx) = raw.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
                raw.iter().map(|v| a + (b - a) * (v - mn) / (mx - mn)).collect()
            };
            let p = ramp(m1, &mut rng);
            let q = ramp(m2, &mut rng);
            let s = sign.factor();
            DMatrix::from_fn(m1, m2, |i, j| s * p[i] * q[j])
        } else {
            let mut raw = DMatrix::<f64>::zeros(m1, m2);
            for r in 1..rank {
                let fu = 0.6 + 0.7 * (r - 1) as f64 + rng.random_range(0.0..0.4);
                let fv = 0.6 + 0.7 * (r - 1) as f64 + rng.random_range(0.0..0.4);
                let p = smooth_vector(m1, fu, rng.random_range(0.0..std::f64::consts::TAU));
                let q = smooth_vector(m2, fv, rng.random_range(0.0..std::f64::consts::TAU));
                let amp = 1.0 / r as f64;
                for i in 0..m1 {
                    for j in 0..m2 {
                        raw[(i, j)] += amp * p[i] * q[j];
                    }
                }
            }
            let (mn, mx) = (raw.min(), raw.max());
            if mx - mn <= 0.0 {
                continue;
            }
            let scale = (hi - lo) / (mx - mn);
            raw.map(|v| lo + scale * (v - mn))
        };
        let values = values.map(|v| v.clamp(lo, hi));
        if has_exact_rank(&values, rank) {
            return Ok(CoefficientField::new(values, quantity));
        }
    }
    Err(Error::Config(format!(
        "could not generate an exact rank-{rank} field on a {m1}x{m2} grid"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Seeded Gaussian bumps, zero initial velocity.
    GaussianPulse,
    Zero,
}

fn initial_frame(grid: &GridSpec, initial: InitialCondition, seed: u64) -> Vec<f64> {
    let (m1, m2) = (grid.m1, grid.m2);
    let mut u = vec![0.0; m1 * m2];
    if initial == InitialCondition::Zero {
        return u;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = (m1.max(2) - 1) as f64 * grid.dx;
    let ly = (m2.max(2) - 1) as f64 * grid.dy;
    let pulses = rng.random_range(1..=3);
    for _ in 0..pulses {
        let cx = rng.random_range(0.25..0.75) * lx;
        let cy = rng.random_range(0.25..0.75) * ly;
        let width = rng.random_range(0.25..0.35) * (lx.min(ly) / 1.9).max(0.5);
        let amp = rng.random_range(0.5..1.0);
        for i in 0..m1 {
            for j in 0..m2 {
                let (x, y) = (i as f64 * grid.dx, j as f64 * grid.dy);
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                u[i * m2 + j] += amp * (-r2 / (2.0 * width * width)).exp();
            }
        }
    }
    u
}

/// Five-point Laplacian with mirrored ghost nodes (zero normal derivative).
fn laplacian(u: &[f64], grid: &GridSpec, out: &mut [f64]) {
    let (m1, m2) = (grid.m1, grid.m2);
    let (ix2, iy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mirror = |k: usize, d: isize, m: usize| -> usize {
        let n = k as isize + d;
        if m == 1 {
            k
        } else if n < 0 {
            1
        } else if n as usize >= m {
            m - 2
        } else {
            n as usize
        }
    };
    for i in 0..m1 {
        let (im, ip) = (mirror(i, -1, m1), mirror(i, 1, m1));
        for j in 0..m2 {
            let (jm, jp) = (mirror(j, -1, m2), mirror(j, 1, m2));
            let c = u[i * m2 + j];
            out[i * m2 + j] = (u[im * m2 + j] - 2.0 * c + u[ip * m2 + j]) * ix2
                + (u[i * m2 + jm] - 2.0 * c + u[i * m2 + jp]) * iy2;
        }
    }
}

/// Largest stable time step for the given speed field.
pub fn max_stable_dt(c2: &CoefficientField, grid: &GridSpec) -> f64 {
    let cmax = c2.values.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
    1.0 / (cmax * (1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy)).sqrt())
}

/// Steps `U_tt + alpha U_t = c^2 lap U` with leapfrog in time and centred
/// damping, reflecting boundaries. Two bootstrap frames are stepped and
/// discarded before the `grid.t` returned frames.
pub fn simulate(
    alpha: &CoefficientField,
    c2: &CoefficientField,
    grid: &GridSpec,
    initial: InitialCondition,
    seed: u64,
) -> Result<WaveField> {
    grid.validate()?;
    let (m1, m2) = (grid.m1, grid.m2);
    for (name, f) in [("alpha", alpha), ("c2", c2)] {
        if f.dims() != (m1, m2) {
            return Err(Error::Dimension(format!(
                "{name} is {:?}, grid is {m1}x{m2}",
                f.dims()
            )));
        }
    }
    if alpha.values.iter().any(|&a| a < 0.0) {
        return Err(Error::Config("attenuation must be non-negative".into()));
    }
    if c2.values.iter().any(|&c| c < 0.0) {
        return Err(Error::Config("c^2 must be non-negative".into()));
    }
    let max_dt = max_stable_dt(c2, grid);
    if grid.dt > max_dt {
        return Err(Error::Cfl { dt: grid.dt, max_dt });
    }

    let n = m1 * m2;
    let dt = grid.dt;
    // column-major nalgebra storage -> row-major flat
    let alpha_rm: Vec<f64> = (0..n).map(|k| alpha.values[(k / m2, k % m2)]).collect();
    let c2_rm: Vec<f64> = (0..n).map(|k| c2.values[(k / m2, k % m2)]).collect();

    let mut prev = initial_frame(grid, initial, seed);
    let mut lap = vec![0.0; n];
    laplacian(&prev, grid, &mut lap);
    // zero initial velocity: U^{-1} = U^{1}
    let mut cur: Vec<f64> = (0..n).map(|k| prev[k] + 0.5 * dt * dt * c2_rm[k] * lap[k]).collect();

    let mut out = WaveField::zeros(*grid);
    let mut next = vec![0.0; n];
    for step in 0..grid.t {
        laplacian(&cur, grid, &mut lap);
        for k in 0..n {
            let damp = 0.5 * alpha_rm[k] * dt;
            next[k] = (2.0 * cur[k] - (1.0 - damp) * prev[k] + dt * dt * c2_rm[k] * lap[k]) / (1.0 + damp);
        }
        for k in 0..n {
            out.data[k * grid.t + step] = next[k];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    if !out.is_finite() {
        return Err(Error::Cfl { dt: grid.dt, max_dt });
    }
    Ok(out)
}

/// Adds i.i.d. Gaussian noise with standard deviation `percent`% of the
/// field's own standard deviation.
pub fn add_noise(field: &WaveField, percent: f64, seed: u64) -> Result<WaveField> {
    if !(percent >= 0.0) {
        return Err(Error::Config(format!("noise percent must be >= 0, got {percent}")));
    }
    if percent == 0.0 {
        return Ok(field.clone());
    }
    let sigma = percent / 100.0 * field.std();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let data = field.data.iter().map(|v| v + normal.sample(&mut rng)).collect();
    WaveField::from_data(field.grid, data)
}

/// Placement rule for a spatial mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "param")]
pub enum MaskKind {
    Full,
    /// Uniform sample without replacement of `round(fraction * m1 * m2)` locations.
    RandomFraction(f64),
    RandomCount(usize),
    /// `(i, i)`.
    Diagonal,
    /// Evenly spaced lattice with the requested number of points.
    EvenGrid(usize),
    /// Right boundary, bottom boundary and main diagonal.
    Rbd,
    /// All four edges.
    Boundary,
}

impl MaskKind {
    /// Parses `full`, `random:0.5`, `random_count:30`, `diagonal`,
    /// `even_grid:30`, `rbd`, `boundary`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Config(format!("mask kind {name:?} needs a parameter")))?
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad mask parameter in {s:?}")))
        };
        Ok(match name {
            "full" => MaskKind::Full,
            "random" | "random_fraction" => MaskKind::RandomFraction(num(arg)?),
            "random_count" => MaskKind::RandomCount(num(arg)? as usize),
            "diagonal" => MaskKind::Diagonal,
            "even_grid" | "grid" => MaskKind::EvenGrid(num(arg)? as usize),
            "rbd" => MaskKind::Rbd,
            "boundary" => MaskKind::Boundary,
            other => return Err(Error::Config(format!("unknown mask kind {other:?}"))),
        })
    }
}

/// Picks `count` distinct entries of `candidates` uniformly.
fn sample_from(m1: usize, m2: usize, candidates: &[(usize, usize)], count: usize, seed: u64) -> Result<Mask> {
    if count > candidates.len() {
        return Err(Error::Config(format!(
            "requested {count} locations but only {} are available",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, candidates.len(), count);
    Mask::from_indices(m1, m2, picks.into_iter().map(|k| candidates[k]))
}

fn even_lattice(m1: usize, m2: usize, count: usize) -> Result<Mask> {
    // rows x cols = count, as square as the grid allows, fewer rows than columns
    let (rows, cols) = (1..=count)
        .filter(|r| count % r == 0)
        .map(|r| (r, count / r))
        .filter(|&(r, c)| r <= m1 && c <= m2 && r <= c)
        .min_by_key(|&(r, c)| c - r)
        .or_else(|| {
            (1..=count)
                .filter(|r| count % r == 0)
                .map(|r| (r, count / r))
                .find(|&(r, c)| r <= m1 && c <= m2)
        })
        .ok_or_else(|| Error::Config(format!("no {count}-point lattice fits a {m1}x{m2} grid")))?;
    let place = |k: usize, n: usize, m: usize| (2 * k + 1) * m / (2 * n);
    Mask::from_indices(
        m1,
        m2,
        (0..rows).flat_map(|r| (0..cols).map(move |c| (place(r, rows, m1), place(c, cols, m2)))),
    )
}

pub fn sample_mask(grid: &GridSpec, kind: MaskKind, seed: u64) -> Result<Mask> {
    let (m1, m2) = (grid.m1, grid.m2);
    match kind {
        MaskKind::Full => Ok(Mask::full(m1, m2)),
        MaskKind::RandomFraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("fraction {f} outside [0, 1]")));
            }
            let count = (f * (m1 * m2) as f64).round() as usize;
            sample_mask(grid, MaskKind::RandomCount(count), seed)
        }
        MaskKind::RandomCount(count) => {
            let all: Vec<(usize, usize)> = (0..m1).flat_map(|i| (0..m2).map(move |j| (i, j))).collect();
            sample_from(m1, m2, &all, count, seed)
        }
        MaskKind::Diagonal => Mask::from_indices(m1, m2, (0..m1.min(m2)).map(|i| (i, i))),
        MaskKind::EvenGrid(count) => {
            if count > m1 * m2 {
                return Err(Error::Config(format!("requested {count} locations on a {m1}x{m2} grid")));
            }
            even_lattice(m1, m2, count)
        }
        MaskKind::Rbd => Mask::from_indices(
            m1,
            m2,
            (0..m1)
                .map(|i| (i, m2 - 1))
                .chain((0..m2).map(|j| (m1 - 1, j)))
                .chain((0..m1.min(m2)).map(|i| (i, i))),
        ),
        MaskKind::Boundary => Mask::from_indices(
            m1,
            m2,
            (0..m1)
                .flat_map(|i| [(i, 0), (i, m2 - 1)])
                .chain((0..m2).flat_map(|j| [(0, j), (m1 - 1, j)])),
        ),
    }
}

/// `fraction` of the locations in `region`, drawn uniformly.
pub fn sample_within(region: &Mask, fraction: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let (m1, m2) = region.dims();
    let candidates: Vec<(usize, usize)> = region.iter().collect();
    let count = (fraction * candidates.len() as f64).round() as usize;
    sample_from(m1, m2, &candidates, count, seed)
}
