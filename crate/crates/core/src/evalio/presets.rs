use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline1_pipeline, baseline2_pipeline, BaselineRecovery, GivenValues, SvtConfig};
use crate::error::{Error, Result};
use crate::evalio::formats::{write_checkpoint, write_coefficients, write_mask, write_matrix_csv, write_wavefield};
use crate::evalio::render::{render_panels, shared_range, Panel};
use crate::evalio::{rmse, write_summary_csv, RmseReport};
use crate::field::{CoefficientField, GridSpec, Mask, Quantity, WaveField};
use crate::losses::LossWeights;
use crate::mlp::MlpConfig;
use crate::trainer::{train, write_history_csv, TermSpec, TrainConfig, TrainOutcome, TrainingData};
use crate::wavesim::{add_noise, make_lowrank_field, sample_mask, sample_within, simulate, InitialCondition, MaskKind};

/// Rank and value range of a generated coefficient map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub rank: usize,
    pub range: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sdpinn,
    Baseline1,
    Baseline2,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Sdpinn => "sdpinn",
            Method::Baseline1 => "baseline1",
            Method::Baseline2 => "baseline2",
        }
    }
}

/// A complete experiment: medium, measurements, prior knowledge and methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub grid: GridSpec,
    pub c2: FieldSpec,
    /// `None` for a non-attenuating medium.
    pub attenuation: Option<FieldSpec>,
    /// Noise standard deviation as a percentage of the signal's.
    pub noise_pct: f64,
    /// Fraction of the locations outside `omega` that are measured; 1 measures
    /// every location.
    pub meas_frac: f64,
    /// Locations whose coefficients are given.
    pub omega: MaskKind,
    /// Seed for the medium, wave, noise and masks.
    pub seed: u64,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    #[serde(default)]
    pub svt: SvtConfig,
}

impl ExperimentPreset {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.noise_pct >= 0.0) {
            return Err(Error::Config(format!("noise_pct must be >= 0, got {}", self.noise_pct)));
        }
        if !(self.meas_frac > 0.0 && self.meas_frac <= 1.0) {
            return Err(Error::Config(format!("meas_frac must lie in (0, 1], got {}", self.meas_frac)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("preset runs no method".into()));
        }
        for spec in std::iter::once(&self.c2).chain(&self.attenuation) {
            if !(spec.range.0 <= spec.range.1) {
                return Err(Error::Config(format!("bad coefficient range {:?}", spec.range)));
            }
        }
        self.train.validate()?;
        self.svt.validate()
    }

    /// Rank budgets of the first and second trained terms.
    pub fn ranks(&self) -> (Option<usize>, Option<usize>) {
        let r = |k: usize| self.train.terms.get(k).map(|t| t.rank);
        (r(0), r(1))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let preset: Self = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Generated medium, measurements and masks of a preset.
#[derive(Clone, Debug)]
pub struct PresetData {
    pub c2: CoefficientField,
    /// All zero for a non-attenuating medium.
    pub alpha: CoefficientField,
    pub clean: WaveField,
    /// Noisy field; only `measured` locations are available to the methods.
    pub field: WaveField,
    pub measured: Mask,
    pub omega: Mask,
}

impl PresetData {
    pub fn generate(preset: &ExperimentPreset) -> Result<Self> {
        let grid = preset.grid;
        let seed = preset.seed;
        let c2 = make_lowrank_field(&grid, preset.c2.rank, preset.c2.range, Quantity::SpeedSquared, seed)?;
        let alpha = match preset.attenuation {
            Some(a) => make_lowrank_field(&grid, a.rank, a.range, Quantity::Attenuation, seed + 1)?,
            None => CoefficientField::constant(grid.m1, grid.m2, 0.0, Quantity::Attenuation),
        };
        let clean = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, seed + 2)?;
        let field = add_noise(&clean, preset.noise_pct, seed + 3)?;
        let omega = sample_mask(&grid, preset.omega, seed + 4)?;
        let measured = if preset.meas_frac >= 1.0 {
            Mask::full(grid.m1, grid.m2)
        } else {
            sample_within(&omega.complement(), preset.meas_frac, seed + 5)?
        };
        Ok(Self { c2, alpha, clean, field, measured, omega })
    }

    /// True values of `quantity`.
    pub fn truth(&self, quantity: Quantity) -> CoefficientField {
        match quantity {
            Quantity::SpeedSquared => self.c2.clone(),
            Quantity::Attenuation => self.alpha.clone(),
            Quantity::NegAttenuation => self.alpha.negated_attenuation(),
        }
    }

    pub fn training_data(&self, terms: &[TermSpec]) -> TrainingData {
        let given = terms
            .iter()
            .map(|t| {
                let truth = self.truth(t.quantity);
                self.omega.iter().map(|(i, j)| (i, j, truth.get(i, j))).collect()
            })
            .collect();
        TrainingData { field: self.field.clone(), measured: self.measured.clone(), given }
    }

    pub fn given_values(&self) -> GivenValues {
        let take = |f: &CoefficientField| self.omega.iter().map(|(i, j)| (i, j, f.get(i, j))).collect();
        GivenValues { alpha: take(&self.alpha), c2: take(&self.c2) }
    }
}

#[derive(Clone, Debug)]
pub struct PresetOutcome {
    pub reports: Vec<RmseReport>,
    pub data: PresetData,
    pub sdpinn: Option<TrainOutcome>,
    pub baseline1: Option<BaselineRecovery>,
    pub baseline2: Option<BaselineRecovery>,
}

impl PresetOutcome {
    pub fn report(&self, method: Method) -> Option<&RmseReport> {
        let suffix = format!("/{}", method.label());
        self.reports.iter().find(|r| match method {
            Method::Sdpinn => !r.preset.contains('/'),
            _ => r.preset.ends_with(&suffix),
        })
    }
}

fn interior_mask(m1: usize, m2: usize) -> Mask {
    let bits = (0..m1 * m2)
        .map(|k| {
            let (i, j) = (k / m2, k % m2);
            i > 0 && j > 0 && i + 1 < m1 && j + 1 < m2
        })
        .collect();
    Mask::from_bits(m1, m2, bits).expect("dims match")
}

fn sdpinn_report(preset: &ExperimentPreset, data: &PresetData, out: &TrainOutcome) -> Result<RmseReport> {
    let region = data.omega.complement();
    let find = |q: Quantity| out.fields.iter().find(|f| f.quantity == q);
    let c2_hat = find(Quantity::SpeedSquared).ok_or_else(|| Error::Config("no c2 term is trained".into()))?;
    let rmse_alpha = match find(Quantity::Attenuation) {
        Some(a) => Some(rmse(a, &data.alpha, &region)?),
        None => None,
    };
    let (r1, r2) = preset.ranks();
    Ok(RmseReport {
        preset: preset.name.clone(),
        noise_pct: preset.noise_pct,
        meas_frac: preset.meas_frac,
        r1,
        r2,
        epoch: Some(out.state.epoch),
        rmse_alpha,
        rmse_c2: rmse(c2_hat, &data.c2, &region)?,
        region_size: region.count(),
    })
}

/// Scored over interior locations outside `omega` that hold an estimate.
fn baseline_report(
    preset: &ExperimentPreset,
    data: &PresetData,
    rec: &BaselineRecovery,
    method: Method,
) -> Result<RmseReport> {
    let (m1, m2) = rec.dims();
    let region = data.omega.complement().intersection(&interior_mask(m1, m2)).intersection(&rec.estimated());
    Ok(RmseReport {
        preset: format!("{}/{}", preset.name, method.label()),
        noise_pct: preset.noise_pct,
        meas_frac: preset.meas_frac,
        r1: None,
        r2: None,
        epoch: None,
        rmse_alpha: Some(rmse(&rec.alpha, &data.alpha, &region)?),
        rmse_c2: rmse(&rec.c2, &data.c2, &region)?,
        region_size: region.count(),
    })
}

fn heatmap(dir: &Path, name: &str, truth: &CoefficientField, estimate: &CoefficientField) -> Result<()> {
    let panels = [Panel { values: &truth.values, mask: None }, Panel { values: &estimate.values, mask: None }];
    render_panels(&dir.join(format!("{name}.ppm")), &panels, Some(shared_range(&panels[..1])), 8)
}

fn baseline_heatmap(dir: &Path, name: &str, truth: &CoefficientField, rec: &CoefficientField, have: &Mask) -> Result<()> {
    let panels = [Panel { values: &truth.values, mask: None }, Panel { values: &rec.values, mask: Some(have) }];
    render_panels(&dir.join(format!("{name}.ppm")), &panels, Some(shared_range(&panels[..1])), 8)
}

fn write_inputs(dir: &Path, preset: &ExperimentPreset, data: &PresetData) -> Result<()> {
    std::fs::write(dir.join("preset.json"), preset.to_json()?)?;
    write_wavefield(&dir.join("field.sdpw"), &data.field)?;
    write_coefficients(&dir.join("true_c2.sdpc"), &data.c2)?;
    write_coefficients(&dir.join("true_alpha.sdpc"), &data.alpha)?;
    write_mask(&dir.join("measured.sdpm"), &data.measured)?;
    write_mask(&dir.join("omega.sdpm"), &data.omega)?;
    let frame = data.field.frame(data.field.grid.t / 2);
    render_panels(
        &dir.join("frame.ppm"),
        &[Panel { values: &frame, mask: Some(&data.measured) }],
        None,
        8,
    )
}

fn write_sdpinn(dir: &Path, data: &PresetData, out: &TrainOutcome) -> Result<()> {
    write_checkpoint(&dir.join("checkpoint.sdpt"), &out.state.params, &out.state.coeffs)?;
    write_history_csv(&dir.join("history.csv"), &out.state.history)?;
    for f in &out.fields {
        let name = match f.quantity {
            Quantity::SpeedSquared => "c2",
            _ => "alpha",
        };
        write_coefficients(&dir.join(format!("{name}_hat.sdpc")), f)?;
        write_matrix_csv(&dir.join(format!("{name}_hat.csv")), &f.values)?;
        heatmap(dir, name, &data.truth(f.quantity), f)?;
    }
    Ok(())
}

fn write_baseline(dir: &Path, data: &PresetData, rec: &BaselineRecovery, method: Method) -> Result<()> {
    let label = method.label();
    rec.write_csv(&dir.join(format!("{label}_locations.csv")))?;
    let have = rec.estimated();
    baseline_heatmap(dir, &format!("{label}_c2"), &data.c2, &rec.c2, &have)?;
    baseline_heatmap(dir, &format!("{label}_alpha"), &data.alpha, &rec.alpha, &have)
}

/// Generates the data, runs every method of the preset and scores it. With
/// `out_dir`, also writes inputs, recovered maps, checkpoint, history,
/// heatmaps and `summary.csv` there.
pub fn run_preset(preset: &ExperimentPreset, out_dir: Option<&Path>) -> Result<PresetOutcome> {
    let ctx = |e: Error| e.context(format!("preset {}", preset.name));
    preset.validate().map_err(ctx)?;
    let data = PresetData::generate(preset).map_err(ctx)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| ctx(e.into()))?;
        write_inputs(dir, preset, &data).map_err(ctx)?;
    }
    let mut outcome = PresetOutcome { reports: Vec::new(), data, sdpinn: None, baseline1: None, baseline2: None };
    let data = &outcome.data;
    for &method in &preset.methods {
        info!("preset {}: running {}", preset.name, method.label());
        match method {
            Method::Sdpinn => {
                let out = train(&data.training_data(&preset.train.terms), &preset.train).map_err(ctx)?;
                outcome.reports.push(sdpinn_report(preset, data, &out).map_err(ctx)?);
                if let Some(dir) = out_dir {
                    write_sdpinn(dir, data, &out).map_err(ctx)?;
                }
                outcome.sdpinn = Some(out);
            }
            Method::Baseline1 | Method::Baseline2 => {
                let rec = if method == Method::Baseline1 {
                    baseline1_pipeline(&data.field, &data.measured)
                } else {
                    baseline2_pipeline(&data.field, &data.measured, &data.given_values(), &preset.svt)
                }
                .map_err(ctx)?;
                outcome.reports.push(baseline_report(preset, data, &rec, method).map_err(ctx)?);
                if let Some(dir) = out_dir {
                    write_baseline(dir, data, &rec, method).map_err(ctx)?;
                }
                match method {
                    Method::Baseline1 => outcome.baseline1 = Some(rec),
                    _ => outcome.baseline2 = Some(rec),
                }
            }
        }
    }
    if let Some(dir) = out_dir {
        write_summary_csv(&dir.join("summary.csv"), &outcome.reports).map_err(ctx)?;
    }
    Ok(outcome)
}

const C2: FieldSpec = FieldSpec { rank: 3, range: (1.0, 4.0) };
const DATA_SEED: u64 = 2024;

fn terms(ranks: &[(Quantity, usize)]) -> Vec<TermSpec> {
    ranks.iter().map(|&(quantity, rank)| TermSpec { quantity, rank }).collect()
}

#[derive(Clone, Copy)]
enum Scale {
    Full,
    Desk,
}

impl Scale {
    fn grid(self) -> GridSpec {
        match self {
            Scale::Full => GridSpec::new(30, 30, 198),
            Scale::Desk => GridSpec::new(20, 20, 120),
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Scale::Full => "",
            Scale::Desk => "desk_",
        }
    }

    /// Entries given in the placement experiments: 30 on the full grid, one
    /// diagonal's worth on the desk grid.
    fn placement_count(self) -> usize {
        match self {
            Scale::Full => 30,
            Scale::Desk => 20,
        }
    }

    fn train(self, epochs: usize, ranks: &[(Quantity, usize)]) -> TrainConfig {
        let weights = LossWeights { w_f: 3e-4, ..LossWeights::default() };
        match self {
            Scale::Full => TrainConfig { epochs, weights, terms: terms(ranks), ..TrainConfig::default() },
            Scale::Desk => TrainConfig {
                epochs: if ranks.len() > 1 { 4000 } else { 1500 },
                learning_rate: 3e-3,
                weights,
                collocation_frames: 4,
                data_batch: 2048,
                network: MlpConfig::desk(),
                terms: terms(ranks),
                ..TrainConfig::default()
            },
        }
    }
}

fn noise_tag(pct: f64) -> String {
    if pct == 0.0 {
        "clean".into()
    } else {
        format!("n{pct}")
    }
}

fn meas_tag(frac: f64) -> String {
    if frac >= 1.0 {
        "full".into()
    } else {
        format!("m{}", (frac * 100.0).round())
    }
}

#[allow(clippy::too_many_arguments)]
fn preset(
    scale: Scale,
    name: String,
    attenuation: Option<FieldSpec>,
    noise_pct: f64,
    meas_frac: f64,
    omega: MaskKind,
    methods: Vec<Method>,
    train: TrainConfig,
) -> ExperimentPreset {
    ExperimentPreset {
        name: format!("{}{name}", scale.prefix()),
        grid: scale.grid(),
        c2: C2,
        attenuation,
        noise_pct,
        meas_frac,
        omega,
        seed: DATA_SEED,
        methods,
        train,
        svt: SvtConfig::default(),
    }
}

fn family(scale: Scale) -> Vec<ExperimentPreset> {
    use Quantity::{NegAttenuation as A, SpeedSquared as C};
    let mut out = Vec::new();
    for noise in [0.0, 10.0, 20.0] {
        for meas in [1.0, 0.5] {
            for r in [3, 5] {
                out.push(preset(
                    scale,
                    format!("table1_{}_{}_r{r}", noise_tag(noise), meas_tag(meas)),
                    None,
                    noise,
                    meas,
                    MaskKind::Boundary,
                    vec![Method::Sdpinn],
                    scale.train(4000, &[(C, r)]),
                ));
            }
        }
    }
    let strong = Some(FieldSpec { rank: 2, range: (0.0, 10.0) });
    let n = scale.placement_count();
    for (tag, omega) in [
        ("diagonal", MaskKind::Diagonal),
        ("grid", MaskKind::EvenGrid(n)),
        ("random", MaskKind::RandomCount(n)),
    ] {
        out.push(preset(
            scale,
            format!("table2_{tag}"),
            strong,
            0.0,
            1.0,
            omega,
            vec![Method::Sdpinn],
            scale.train(6000, &[(A, 2), (C, 3)]),
        ));
    }
    let halved = Some(FieldSpec { rank: 2, range: (0.0, 5.0) });
    for (r1, r2) in [(5, 5), (2, 3)] {
        for meas in [1.0, 0.75, 0.5] {
            for noise in [0.0, 10.0, 20.0] {
                out.push(preset(
                    scale,
                    format!("table3_{}_{}_r{r1}{r2}", noise_tag(noise), meas_tag(meas)),
                    halved,
                    noise,
                    meas,
                    MaskKind::Rbd,
                    vec![Method::Sdpinn],
                    scale.train(5000, &[(A, r1), (C, r2)]),
                ));
            }
        }
    }
    out.push(preset(
        scale,
        "table4_baselines".into(),
        halved,
        0.0,
        0.5,
        MaskKind::Rbd,
        vec![Method::Sdpinn, Method::Baseline1, Method::Baseline2],
        scale.train(5000, &[(A, 5), (C, 5)]),
    ));
    out
}

/// Every named preset: the full-scale family and its `desk_` counterpart.
pub fn presets() -> Vec<ExperimentPreset> {
    let mut all = family(Scale::Full);
    all.extend(family(Scale::Desk));
    all
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|p| p.name).collect()
}

pub fn find_preset(name: &str) -> Result<ExperimentPreset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.into()))
}
