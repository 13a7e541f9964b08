use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use sdpinn::baselines::{baseline1_pipeline, baseline2_pipeline, tau_grid, GivenValues, SvtConfig};
use sdpinn::evalio::formats::{
    read_coefficients, read_mask, read_wavefield, write_checkpoint, write_coefficients, write_mask, write_wavefield,
};
use sdpinn::evalio::render::{render_heatmap, render_panels, Panel};
use sdpinn::evalio::{
    find_preset, presets, rmse, run_preset, threads_from_env, with_threads, ExperimentPreset, FieldSpec,
};
use sdpinn::field::{CoefficientField, GridSpec, Mask, Quantity};
use sdpinn::trainer::{train, write_history_csv, TermSpec, TrainConfig, TrainingData};
use sdpinn::wavesim::{add_noise, make_lowrank_field, sample_mask, sample_within, simulate, InitialCondition, MaskKind};
use sdpinn::{Error, Result};

#[derive(Parser)]
#[command(name = "sdpinn", version, about = "Recover spatially varying wave-equation coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a medium and simulate the wave field.
    Simulate(SimulateArgs),
    /// Sample the given-coefficient set and the measured locations.
    Mask(MaskArgs),
    /// Add Gaussian noise to a wave field.
    Noise(NoiseArgs),
    /// Recover coefficient maps with the network.
    Train(TrainArgs),
    /// Interpolation + finite differences + least squares.
    Baseline1(Baseline1Args),
    /// Least squares at well-measured locations + matrix completion.
    Baseline2(Baseline2Args),
    /// RMSE of a recovered map outside the given set.
    Eval(EvalArgs),
    /// Draw a coefficient map or one wave frame as a PPM heatmap.
    Render(RenderArgs),
    /// Named experiments.
    #[command(subcommand)]
    Preset(PresetCommand),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "30x30x198")]
    grid: String,
    #[arg(long, default_value_t = 3)]
    c2_rank: usize,
    /// Attenuation rank; omit for a non-attenuating medium.
    #[arg(long)]
    alpha_rank: Option<usize>,
    #[arg(long, default_value_t = 5.0)]
    alpha_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long, default_value = "30x30x198")]
    grid: String,
    /// full, diagonal, rbd, boundary, even_grid:N, random:F or random_count:N
    #[arg(long, default_value = "rbd")]
    omega: String,
    /// Fraction of the locations outside the given set that are measured.
    #[arg(long, default_value_t = 1.0)]
    meas_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    noise_pct: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Inputs shared by the recovery commands.
#[derive(Args)]
struct Inputs {
    #[arg(long)]
    field: PathBuf,
    /// Measured locations; all when omitted.
    #[arg(long)]
    measured: Option<PathBuf>,
    /// Locations whose coefficients are taken from the truth files.
    #[arg(long)]
    omega: Option<PathBuf>,
    #[arg(long)]
    c2: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// `r` recovers c2 only; `r1,r2` recovers alpha and c2.
    #[arg(long, default_value = "5,5")]
    rank: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON training configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Baseline1Args {
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Args)]
struct Baseline2Args {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    tau: Option<f64>,
    /// Sweep `lo,hi,count` geometrically spaced thresholds.
    #[arg(long)]
    tau_sweep: Option<String>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// `c2` or `alpha`.
    #[arg(long, default_value = "c2")]
    quantity: String,
    /// Given-coefficient set excluded from the score.
    #[arg(long)]
    omega: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// A `.sdpc` coefficient map or a `.sdpw` wave field.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Locations outside this mask are drawn black.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Pixels per entry.
    #[arg(long, default_value_t = 8)]
    pixel: usize,
    #[arg(long, default_value = "heatmap.ppm")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PresetCommand {
    List,
    /// Print a preset as JSON, for use with `preset run --config`.
    Show { name: String },
    Run(PresetRunArgs),
}

#[derive(Args)]
struct PresetRunArgs {
    /// Named preset; ignored with --config.
    name: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    noise_pct: Option<f64>,
    #[arg(long)]
    meas_frac: Option<f64>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_ranks(s: &str) -> Result<Vec<TermSpec>> {
    let ranks: Vec<usize> = s
        .split(',')
        .map(|r| r.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("--rank must look like 5 or 5,5, got {s:?}")))?;
    match ranks.as_slice() {
        &[r] => Ok(vec![TermSpec { quantity: Quantity::SpeedSquared, rank: r }]),
        &[r1, r2] => Ok(vec![
            TermSpec { quantity: Quantity::NegAttenuation, rank: r1 },
            TermSpec { quantity: Quantity::SpeedSquared, rank: r2 },
        ]),
        _ => Err(Error::Config(format!("--rank takes one or two values, got {s:?}"))),
    }
}

fn parse_quantity(s: &str) -> Result<Quantity> {
    match s {
        "c2" => Ok(Quantity::SpeedSquared),
        "alpha" => Ok(Quantity::Attenuation),
        _ => Err(Error::Config(format!("quantity must be c2 or alpha, got {s:?}"))),
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let grid = GridSpec::parse_dims(&a.grid)?;
    let c2 = make_lowrank_field(&grid, a.c2_rank, (1.0, 4.0), Quantity::SpeedSquared, a.seed)?;
    let alpha = match a.alpha_rank {
        Some(r) => make_lowrank_field(&grid, r, (0.0, a.alpha_max), Quantity::Attenuation, a.seed + 1)?,
        None => CoefficientField::constant(grid.m1, grid.m2, 0.0, Quantity::Attenuation),
    };
    let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, a.seed + 2)?;
    std::fs::create_dir_all(&a.out)?;
    write_wavefield(&a.out.join("field.sdpw"), &field)?;
    write_coefficients(&a.out.join("true_c2.sdpc"), &c2)?;
    write_coefficients(&a.out.join("true_alpha.sdpc"), &alpha)?;
    println!("wrote {}x{}x{} field to {}", grid.m1, grid.m2, grid.t, a.out.display());
    Ok(())
}

fn mask_cmd(a: MaskArgs) -> Result<()> {
    let grid = GridSpec::parse_dims(&a.grid)?;
    let omega = sample_mask(&grid, MaskKind::parse(&a.omega)?, a.seed)?;
    let measured = if a.meas_frac >= 1.0 {
        Mask::full(grid.m1, grid.m2)
    } else {
        sample_within(&omega.complement(), a.meas_frac, a.seed + 1)?
    };
    std::fs::create_dir_all(&a.out)?;
    write_mask(&a.out.join("omega.sdpm"), &omega)?;
    write_mask(&a.out.join("measured.sdpm"), &measured)?;
    println!("omega: {} locations, measured: {} locations", omega.count(), measured.count());
    Ok(())
}

fn noise_cmd(a: NoiseArgs) -> Result<()> {
    let field = add_noise(&read_wavefield(&a.field)?, a.noise_pct, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    write_wavefield(&a.out.join("field.sdpw"), &field)
}

struct Loaded {
    field: sdpinn::field::WaveField,
    measured: Mask,
    omega: Mask,
    c2: Option<CoefficientField>,
    alpha: Option<CoefficientField>,
}

fn load(inputs: &Inputs) -> Result<Loaded> {
    let field = read_wavefield(&inputs.field)?;
    let g = field.grid;
    let mask_or = |p: &Option<PathBuf>, default: Mask| p.as_deref().map(read_mask).unwrap_or(Ok(default));
    Ok(Loaded {
        measured: mask_or(&inputs.measured, Mask::full(g.m1, g.m2))?,
        omega: mask_or(&inputs.omega, Mask::empty(g.m1, g.m2))?,
        c2: inputs.c2.as_deref().map(|p| read_coefficients(p, Quantity::SpeedSquared)).transpose()?,
        alpha: inputs.alpha.as_deref().map(|p| read_coefficients(p, Quantity::Attenuation)).transpose()?,
        field,
    })
}

impl Loaded {
    fn given(&self, quantity: Quantity) -> Result<Vec<(usize, usize, f64)>> {
        if self.omega.is_empty() {
            return Ok(vec![]);
        }
        let truth = match quantity {
            Quantity::SpeedSquared => self.c2.clone(),
            Quantity::Attenuation => self.alpha.clone(),
            Quantity::NegAttenuation => self.alpha.as_ref().map(|a| a.negated_attenuation()),
        }
        .ok_or_else(|| Error::Config(format!("--omega needs the {} truth file", quantity.label())))?;
        Ok(self.omega.iter().map(|(i, j)| (i, j, truth.get(i, j))).collect())
    }

    fn report(&self, label: &str, estimate: &CoefficientField, truth: Option<&CoefficientField>, region: &Mask) {
        if let Some(t) = truth {
            match rmse(estimate, t, region) {
                Ok(v) => println!("rmse_{label} {v:.6} over {} locations", region.count()),
                Err(e) => eprintln!("rmse_{label}: {e}"),
            }
        }
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = load(&a.inputs)?;
    let mut config: TrainConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    config.terms = parse_ranks(&a.rank)?;
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let given = config.terms.iter().map(|t| data.given(t.quantity)).collect::<Result<_>>()?;
    let td = TrainingData { field: data.field.clone(), measured: data.measured.clone(), given };
    let out = train(&td, &config)?;
    let dir = &a.inputs.out;
    std::fs::create_dir_all(dir)?;
    write_checkpoint(&dir.join("checkpoint.sdpt"), &out.state.params, &out.state.coeffs)?;
    write_history_csv(&dir.join("history.csv"), &out.state.history)?;
    let region = data.omega.complement();
    for f in &out.fields {
        let (label, truth) = match f.quantity {
            Quantity::SpeedSquared => ("c2", data.c2.as_ref()),
            _ => ("alpha", data.alpha.as_ref()),
        };
        write_coefficients(&dir.join(format!("{label}_hat.sdpc")), f)?;
        data.report(label, f, truth, &region);
    }
    Ok(())
}

fn interior_unknown(data: &Loaded, have: &Mask) -> Mask {
    let (m1, m2) = have.dims();
    let interior = Mask::from_indices(m1, m2, (1..m1 - 1).flat_map(|i| (1..m2 - 1).map(move |j| (i, j))))
        .expect("in range");
    data.omega.complement().intersection(&interior).intersection(have)
}

fn write_recovery(dir: &Path, name: &str, data: &Loaded, rec: &sdpinn::baselines::BaselineRecovery) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    rec.write_csv(&dir.join(format!("{name}_locations.csv")))?;
    write_coefficients(&dir.join(format!("{name}_c2.sdpc")), &rec.c2)?;
    write_coefficients(&dir.join(format!("{name}_alpha.sdpc")), &rec.alpha)?;
    let region = interior_unknown(data, &rec.estimated());
    data.report("alpha", &rec.alpha, data.alpha.as_ref(), &region);
    data.report("c2", &rec.c2, data.c2.as_ref(), &region);
    Ok(())
}

fn baseline1_cmd(a: Baseline1Args) -> Result<()> {
    let data = load(&a.inputs)?;
    let rec = baseline1_pipeline(&data.field, &data.measured)?;
    write_recovery(&a.inputs.out, "baseline1", &data, &rec)
}

fn baseline2_cmd(a: Baseline2Args) -> Result<()> {
    let data = load(&a.inputs)?;
    let given = GivenValues { alpha: data.given(Quantity::Attenuation)?, c2: data.given(Quantity::SpeedSquared)? };
    let base = SvtConfig { tau: a.tau, max_iters: a.max_iters, ..SvtConfig::default() };
    match a.tau_sweep {
        None => {
            let rec = baseline2_pipeline(&data.field, &data.measured, &given, &base)?;
            write_recovery(&a.inputs.out, "baseline2", &data, &rec)
        }
        Some(spec) => {
            let parts: Vec<f64> = spec.split(',').filter_map(|p| p.trim().parse().ok()).collect();
            let [lo, hi, count] = parts[..] else {
                return Err(Error::Config(format!("--tau-sweep must look like lo,hi,count, got {spec:?}")));
            };
            for tau in tau_grid(lo, hi, count as usize) {
                println!("tau {tau:.6e}");
                match baseline2_pipeline(&data.field, &data.measured, &given, &SvtConfig { tau: Some(tau), ..base }) {
                    Ok(rec) => write_recovery(&a.inputs.out.join(format!("tau_{tau:.3e}")), "baseline2", &data, &rec)?,
                    Err(e) => println!("  failed: {e}"),
                }
            }
            Ok(())
        }
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let q = parse_quantity(&a.quantity)?;
    let est = read_coefficients(&a.estimate, q)?;
    let truth = read_coefficients(&a.truth, q)?;
    let (m1, m2) = truth.dims();
    let region = match &a.omega {
        Some(p) => read_mask(p)?.complement(),
        None => Mask::full(m1, m2),
    };
    println!("{:.10}", rmse(&est, &truth, &region)?);
    Ok(())
}

fn render_cmd(a: RenderArgs) -> Result<()> {
    let mask = a.mask.as_deref().map(read_mask).transpose()?;
    let values = match a.input.extension().and_then(|e| e.to_str()) {
        Some("sdpw") => {
            let f = read_wavefield(&a.input)?;
            if a.frame >= f.grid.t {
                return Err(Error::Config(format!("frame {} outside 0..{}", a.frame, f.grid.t)));
            }
            f.frame(a.frame)
        }
        _ => {
            let c = read_coefficients(&a.input, Quantity::SpeedSquared)
                .or_else(|_| read_coefficients(&a.input, Quantity::NegAttenuation))?;
            c.values
        }
    };
    if a.pixel == 1 {
        render_heatmap(&a.out, &values, mask.as_ref(), None)
    } else {
        render_panels(&a.out, &[Panel { values: &values, mask: mask.as_ref() }], None, a.pixel)
    }
}

fn preset_run(a: PresetRunArgs) -> Result<()> {
    let mut p: ExperimentPreset = match (&a.config, &a.name) {
        (Some(path), _) => ExperimentPreset::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => find_preset(name)?,
        (None, None) => return Err(Error::Config("give a preset name or --config".into())),
    };
    if let Some(g) = &a.grid {
        p.grid = GridSpec::parse_dims(g)?;
    }
    if let Some(v) = a.noise_pct {
        p.noise_pct = v;
    }
    if let Some(v) = a.meas_frac {
        p.meas_frac = v;
    }
    if let Some(o) = &a.omega {
        p.omega = MaskKind::parse(o)?;
    }
    if let Some(r) = &a.rank {
        p.train.terms = parse_ranks(r)?;
        if p.train.terms.len() == 2 && p.attenuation.is_none() {
            p.attenuation = Some(FieldSpec { rank: 2, range: (0.0, 5.0) });
        }
    }
    if let Some(e) = a.epochs {
        p.train.epochs = e;
    }
    if let Some(s) = a.seed {
        p.seed = s;
        p.train.seed = s;
    }
    let out = run_preset(&p, Some(&a.out))?;
    for r in &out.reports {
        let alpha = r.rmse_alpha.map_or("-".into(), |v| format!("{v:.4}"));
        println!("{:<40} rmse_alpha {alpha:>8} rmse_c2 {:.4}", r.preset, r.rmse_c2);
    }
    info!("artifacts in {}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Mask(a) => mask_cmd(a),
        Command::Noise(a) => noise_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Baseline1(a) => baseline1_cmd(a),
        Command::Baseline2(a) => baseline2_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Render(a) => render_cmd(a),
        Command::Preset(PresetCommand::List) => {
            for p in presets() {
                println!("{}", p.name);
            }
            Ok(())
        }
        Command::Preset(PresetCommand::Show { name }) => {
            println!("{}", find_preset(&name)?.to_json()?);
            Ok(())
        }
        Command::Preset(PresetCommand::Run(a)) => preset_run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| with_threads(threads, || run(cli)).and_then(|r| r));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
