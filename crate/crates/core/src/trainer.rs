//! Joint Adam optimisation of the network and the coefficient factors.

use std::path::Path;

use log::{debug, info};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CoefficientField, GridSpec, InputScaling, Mask, Quantity, WaveField};
use crate::losses::{objective_gradient, Batch, CollocationSet, GivenCoefficients, LossParts, LossWeights, Sample};
use crate::lowrank::CoefficientSet;
use crate::mlp::{init_params, MlpConfig, MlpParams};

/// A coefficient term to recover and its rank budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpec {
    pub quantity: Quantity,
    pub rank: usize,
}

/// How residual points are drawn each step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollocationSampling {
    /// Whole frames at every location.
    #[default]
    Frames,
    /// The same number of points, drawn as independent (location, time) pairs.
    Points,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate of the coefficient factors; `None` shares `learning_rate`.
    pub factor_learning_rate: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Learning rates follow a cosine from their initial value down to this
    /// fraction of it at the last epoch; 1 keeps them constant.
    pub final_lr_fraction: f64,
    pub weights: LossWeights,
    /// Time frames of the residual loss per step; all frames when the grid
    /// has no more than this many.
    pub collocation_frames: usize,
    pub collocation_sampling: CollocationSampling,
    /// Measurement samples per step.
    pub data_batch: usize,
    pub network: MlpConfig,
    pub input_scaling: InputScaling,
    pub terms: Vec<TermSpec>,
    pub seed: u64,
    /// Abort once the step loss exceeds this multiple of the first one.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            learning_rate: 1e-3,
            factor_learning_rate: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            final_lr_fraction: 1.0,
            weights: LossWeights::default(),
            collocation_frames: 8,
            collocation_sampling: CollocationSampling::Frames,
            data_batch: 4096,
            network: MlpConfig::default(),
            input_scaling: InputScaling::default(),
            terms: vec![
                TermSpec { quantity: Quantity::NegAttenuation, rank: 5 },
                TermSpec { quantity: Quantity::SpeedSquared, rank: 5 },
            ],
            seed: 0,
            divergence_factor: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for lr in std::iter::once(self.learning_rate).chain(self.factor_learning_rate) {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("learning rates must be positive, got {lr}"));
            }
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("Adam betas must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps >= 0.0) {
            return bad(format!("Adam eps must be non-negative, got {}", self.adam_eps));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad(format!("final learning-rate fraction must lie in (0, 1], got {}", self.final_lr_fraction));
        }
        if self.collocation_frames == 0 || self.data_batch == 0 {
            return bad("collocation frames and data batch must be positive".into());
        }
        if self.terms.is_empty() || self.terms.iter().any(|t| t.rank == 0) {
            return bad("need at least one term, each with rank >= 1".into());
        }
        self.weights.validate()?;
        self.network.validate()
    }

    /// Multiplier on the learning rates at a zero-based step.
    pub fn lr_scale(&self, step: u64) -> f64 {
        let f = self.final_lr_fraction;
        if f >= 1.0 || self.epochs <= 1 {
            return 1.0;
        }
        let progress = (step as f64 / (self.epochs - 1) as f64).min(1.0);
        f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Adam moment estimates over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], config: &TrainConfig) -> Result<()> {
        self.update_split(params, grad, config, params.len())
    }

    /// Like [`Adam::update`], with slots from `split` on using the factor
    /// learning rate.
    pub fn update_split(&mut self, params: &mut [f64], grad: &[f64], config: &TrainConfig, split: usize) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "Adam state has {} slots, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        self.step += 1;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let scale = config.lr_scale(self.step - 1);
        let theta_lr = scale * config.learning_rate;
        let factor_lr = scale * config.factor_learning_rate.unwrap_or(config.learning_rate);
        for k in 0..params.len() {
            let lr = if k < split { theta_lr } else { factor_lr };
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g;
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub parts: LossParts,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: MlpParams,
    pub coeffs: CoefficientSet,
    /// Moments over `[theta; factors]`.
    pub adam: Adam,
    pub epoch: usize,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    pub fn init(grid: &GridSpec, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params(config.network, config.seed);
        let spec: Vec<(Quantity, usize)> = config.terms.iter().map(|t| (t.quantity, t.rank)).collect();
        let coeffs = CoefficientSet::init(grid.m1, grid.m2, &spec, config.seed.wrapping_add(1))?;
        let adam = Adam::new(params.param_count() + coeffs.factor_count());
        Ok(Self { params, coeffs, adam, epoch: 0, history: Vec::new() })
    }

    /// Applies one Adam step jointly to the network parameters and factors.
    pub fn adam_step(&mut self, theta_grad: &[f64], factor_grad: &[f64], config: &TrainConfig) -> Result<()> {
        let non_finite = |g: &[f64]| g.iter().any(|v| !v.is_finite());
        if non_finite(theta_grad) || non_finite(factor_grad) {
            return Err(Error::NonFiniteGradient { term: "total".into() });
        }
        let mut flat = self.params.to_flat();
        let n_theta = flat.len();
        flat.extend(self.coeffs.to_flat());
        let grad: Vec<f64> = theta_grad.iter().chain(factor_grad).copied().collect();
        self.adam.update_split(&mut flat, &grad, config, n_theta)?;
        self.params.assign_flat(&flat[..n_theta]);
        self.coeffs.assign_flat(&flat[n_theta..]);
        Ok(())
    }

    /// Composed coefficient maps, with `-alpha` reported as `alpha`.
    pub fn recovered_fields(&self) -> Vec<CoefficientField> {
        reported_fields(&self.coeffs)
    }
}

pub fn reported_fields(coeffs: &CoefficientSet) -> Vec<CoefficientField> {
    coeffs
        .fields()
        .into_iter()
        .map(|f| if f.quantity == Quantity::NegAttenuation { f.negated_attenuation() } else { f })
        .collect()
}

/// Measurements and prior knowledge available for training.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub field: WaveField,
    /// Locations whose time series are measured.
    pub measured: Mask,
    /// Known coefficient values, one list per term of the config.
    pub given: GivenCoefficients,
}

impl TrainingData {
    pub fn samples(&self, scaling: InputScaling) -> Vec<Sample> {
        let grid = &self.field.grid;
        let mut out = Vec::with_capacity(self.measured.count() * grid.t);
        for (i, j) in self.measured.iter() {
            for (n, &u) in self.field.series(i, j).iter().enumerate() {
                out.push(Sample { point: grid.network_input(scaling, i, j, n), u });
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub fields: Vec<CoefficientField>,
}

pub fn train(data: &TrainingData, config: &TrainConfig) -> Result<TrainOutcome> {
    let state = TrainState::init(&data.field.grid, config)?;
    train_from(state, data, config)
}

/// Continues training `state` until it has seen `config.epochs` epochs.
pub fn train_from(mut state: TrainState, data: &TrainingData, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let grid = data.field.grid;
    if data.measured.dims() != (grid.m1, grid.m2) {
        return Err(Error::Dimension("measurement mask does not match the field grid".into()));
    }
    if data.measured.is_empty() {
        return Err(Error::Empty("measurement mask".into()));
    }
    if data.given.len() != config.terms.len() {
        return Err(Error::Dimension(format!(
            "{} given lists for {} terms",
            data.given.len(),
            config.terms.len()
        )));
    }
    let samples = data.samples(config.input_scaling);
    let colloc = CollocationSet { scaling: config.input_scaling, ..CollocationSet::full(&grid) };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a1e);
    let mut first_total = state.history.first().map(|h| h.total);

    while state.epoch < config.epochs {
        let batch = draw_batch(&samples, &colloc, &grid, config, &mut rng);
        let out = objective_gradient(&state.params, &state.coeffs, &batch, &data.given, &config.weights)?;
        let first = *first_total.get_or_insert(out.total);
        if !(out.total <= config.divergence_factor * first) {
            return Err(Error::Diverged {
                epoch: state.epoch,
                loss: out.total,
                limit: config.divergence_factor * first,
            });
        }
        state.history.push(HistoryRow { epoch: state.epoch, parts: out.parts, total: out.total });
        state.adam_step(out.theta.as_slice(), &out.factors, config)?;
        state.epoch += 1;
        if state.epoch % 100 == 0 {
            debug!(
                "epoch {} total {:.4e} u {:.3e} f {:.3e} g {:.3e} si {:.3e}",
                state.epoch, out.total, out.parts.u, out.parts.f, out.parts.g, out.parts.si
            );
        }
    }
    if let Some(last) = state.history.last() {
        info!("trained {} epochs, final loss {:.4e}", state.epoch, last.total);
    }
    let fields = state.recovered_fields();
    Ok(TrainOutcome { state, fields })
}

fn draw_batch(
    samples: &[Sample],
    colloc: &CollocationSet,
    grid: &GridSpec,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Batch {
    let n_data = config.data_batch.min(samples.len());
    let mut idx = sample(rng, samples.len(), n_data).into_vec();
    idx.sort_unstable();
    let batch_samples = idx.iter().map(|&k| samples[k]).collect();

    let n_frames = config.collocation_frames.min(colloc.times.len());
    let (colloc_points, colloc_locations) = match config.collocation_sampling {
        CollocationSampling::Frames => {
            let mut frames: Vec<usize> = sample(rng, colloc.times.len(), n_frames)
                .into_iter()
                .map(|k| colloc.times[k])
                .collect();
            frames.sort_unstable();
            colloc.points(grid, &frames)
        }
        CollocationSampling::Points => {
            let n_loc = colloc.locations.len();
            let mut idx = sample(rng, n_loc * colloc.times.len(), n_frames * n_loc).into_vec();
            idx.sort_unstable();
            idx.iter()
                .map(|&k| {
                    let (i, j) = colloc.locations[k % n_loc];
                    (grid.network_input(colloc.scaling, i, j, colloc.times[k / n_loc]), (i, j))
                })
                .unzip()
        }
    };

    Batch {
        samples: batch_samples,
        u_scale: samples.len() as f64 / n_data as f64,
        colloc_points,
        colloc_locations,
        f_scale: colloc.times.len() as f64 / n_frames as f64,
        input_scale: grid.input_scale(colloc.scaling),
    }
}

/// Exponential moving average of the step totals with span `window`.
pub fn smoothed_totals(history: &[HistoryRow], window: usize) -> Vec<f64> {
    let a = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(history.len());
    let mut ema = None;
    for row in history {
        let next = match ema {
            None => row.total,
            Some(prev) => a * row.total + (1.0 - a) * prev,
        };
        ema = Some(next);
        out.push(next);
    }
    out
}

/// Writes `epoch,loss_u,loss_f,loss_g,loss_si,total`.
pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss_u", "loss_f", "loss_g", "loss_si", "total"])?;
    for h in history {
        w.write_record(&[
            h.epoch.to_string(),
            h.parts.u.to_string(),
            h.parts.f.to_string(),
            h.parts.g.to_string(),
            h.parts.si.to_string(),
            h.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad history field {k} in {rec:?}")))
        };
        out.push(HistoryRow {
            epoch: num(0)? as usize,
            parts: LossParts { u: num(1)?, f: num(2)?, g: num(3)?, si: num(4)? },
            total: num(5)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavesim::{make_lowrank_field, sample_mask, simulate, InitialCondition, MaskKind};

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig { epochs: 101, final_lr_fraction: 0.1, ..TrainConfig::default() };
        assert_eq!(c.lr_scale(0), 1.0);
        assert!((c.lr_scale(50) - 0.55).abs() < 1e-12);
        assert!((c.lr_scale(100) - 0.1).abs() < 1e-12);
        assert_eq!(TrainConfig::default().lr_scale(3000), 1.0);
        assert!(TrainConfig { final_lr_fraction: 0.0, ..c }.validate().is_err());
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_first_step_by_hand() {
        let config = cfg();
        let mut adam = Adam::new(1);
        let mut p = [1.0];
        let g = 0.3;
        adam.update(&mut p, &[g], &config).unwrap();
        // m_hat = g, v_hat = g^2
        let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_second_step_by_hand() {
        let config = cfg();
        let mut adam = Adam::new(1);
        let mut p = [0.0];
        let g: f64 = -2.0;
        adam.update(&mut p, &[g], &config).unwrap();
        let after_one = p[0];
        adam.update(&mut p, &[g], &config).unwrap();
        let m = 0.9 * (0.1 * g) + 0.1 * g;
        let v = 0.999 * (0.001 * g * g) + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let step = -0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - after_one - step).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_parameters_and_decays_moments() {
        let config = cfg();
        let mut adam = Adam::new(2);
        let mut p = [0.5, -0.5];
        adam.update(&mut p, &[1.0, -1.0], &config).unwrap();
        let (p1, m1, v1) = (p, adam.m.clone(), adam.v.clone());
        let mut fresh = Adam::new(2);
        let mut q = p1;
        fresh.update(&mut q, &[0.0, 0.0], &config).unwrap();
        assert_eq!(q, p1);
        adam.update(&mut p, &[0.0, 0.0], &config).unwrap();
        assert!(adam.m.iter().zip(&m1).all(|(a, b)| a.abs() < b.abs()));
        assert!(adam.v.iter().zip(&v1).all(|(a, b)| a < b));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { adam_beta1: 1.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { terms: vec![], ..cfg() }.validate().is_err());
    }

    fn toy_data(grid: GridSpec) -> (TrainingData, CoefficientField) {
        let c2 = make_lowrank_field(&grid, 2, (1.0, 4.0), Quantity::SpeedSquared, 3).unwrap();
        let alpha = CoefficientField::constant(grid.m1, grid.m2, 0.0, Quantity::Attenuation);
        let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, 3).unwrap();
        let boundary = sample_mask(&grid, MaskKind::Boundary, 0).unwrap();
        let given = vec![boundary.iter().map(|(i, j)| (i, j, c2.get(i, j))).collect()];
        let measured = Mask::full(grid.m1, grid.m2);
        (TrainingData { field, measured, given }, c2)
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            network: MlpConfig::new(3, 12).unwrap(),
            terms: vec![TermSpec { quantity: Quantity::SpeedSquared, rank: 2 }],
            data_batch: 256,
            collocation_frames: 2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_state() {
        let grid = GridSpec::new(6, 6, 20);
        let (data, _) = toy_data(grid);
        let config = small_config(0);
        let out = train(&data, &config).unwrap();
        assert_eq!(out.state, TrainState::init(&grid, &config).unwrap());
        assert!(out.state.history.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let grid = GridSpec::new(6, 6, 20);
        let (data, _) = toy_data(grid);
        let config = small_config(60);
        let a = train(&data, &config).unwrap();
        let b = train(&data, &config).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.state.history.len(), 60);
        let h = &a.state.history;
        let early: f64 = h[..10].iter().map(|r| r.total).sum();
        let late: f64 = h[50..].iter().map(|r| r.total).sum();
        assert!(late < early, "{late} vs {early}");
    }

    #[test]
    fn resumed_training_matches_uninterrupted_length() {
        let grid = GridSpec::new(6, 6, 20);
        let (data, _) = toy_data(grid);
        let part = train(&data, &small_config(5)).unwrap();
        let resumed = train_from(part.state, &data, &small_config(8)).unwrap();
        assert_eq!(resumed.state.epoch, 8);
        assert_eq!(resumed.state.history.len(), 8);
    }

    #[test]
    fn missing_measurements_rejected() {
        let grid = GridSpec::new(6, 6, 20);
        let (mut data, _) = toy_data(grid);
        data.measured = Mask::empty(6, 6);
        assert!(matches!(train(&data, &small_config(1)), Err(Error::Empty(_))));
    }

    #[test]
    fn divergence_guard_fires() {
        let grid = GridSpec::new(6, 6, 20);
        let (data, _) = toy_data(grid);
        let config = TrainConfig { learning_rate: 50.0, divergence_factor: 2.0, ..small_config(200) };
        assert!(matches!(train(&data, &config), Err(Error::Diverged { .. })));
    }

    #[test]
    fn history_csv_round_trip() {
        let rows = vec![
            HistoryRow { epoch: 0, parts: LossParts { u: 1.5, f: 2.0, g: 0.25, si: 0.0 }, total: 1.95 },
            HistoryRow { epoch: 1, parts: LossParts { u: 1.0, f: 1.0, g: 0.125, si: 1e-9 }, total: 1.225 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,loss_u,loss_f,loss_g,loss_si,total\n"));
        assert_eq!(read_history_csv(&path).unwrap(), rows);
    }

    #[test]
    fn smoothing_of_constant_history_is_constant() {
        let rows: Vec<HistoryRow> = (0..10)
            .map(|e| HistoryRow { epoch: e, parts: LossParts::default(), total: 3.0 })
            .collect();
        assert!(smoothed_totals(&rows, 200).iter().all(|&v| (v - 3.0).abs() < 1e-14));
    }
}
