//! Recover a squared phase-speed map of a non-attenuating medium from full
//! measurements, with the coefficients given on the four boundaries.
//!
//! cargo run --release --example recover_speed -- [epochs]

use sdpinn::evalio::rmse;
use sdpinn::field::{CoefficientField, GridSpec, Mask, Quantity};
use sdpinn::losses::LossWeights;
use sdpinn::mlp::MlpConfig;
use sdpinn::trainer::{train, TermSpec, TrainConfig, TrainingData};
use sdpinn::wavesim::{make_lowrank_field, sample_mask, simulate, InitialCondition, MaskKind};

fn main() -> sdpinn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("debug")).init();
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);

    let grid = GridSpec::new(14, 14, 80);
    let c2 = make_lowrank_field(&grid, 3, (1.0, 4.0), Quantity::SpeedSquared, 1)?;
    let alpha = CoefficientField::constant(14, 14, 0.0, Quantity::Attenuation);
    let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, 2)?;

    let omega = sample_mask(&grid, MaskKind::Boundary, 0)?;
    let given = vec![omega.iter().map(|(i, j)| (i, j, c2.get(i, j))).collect()];
    let data = TrainingData { field, measured: Mask::full(14, 14), given };

    let config = TrainConfig {
        epochs,
        learning_rate: 3e-3,
        weights: LossWeights { w_f: 3e-4, ..LossWeights::default() },
        collocation_frames: 4,
        data_batch: 2048,
        network: MlpConfig::new(4, 32)?,
        terms: vec![TermSpec { quantity: Quantity::SpeedSquared, rank: 5 }],
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(&data, &config)?;
    let region = omega.complement();
    println!("rmse_c2 over {} unknown locations: {:.4}", region.count(), rmse(&out.fields[0], &c2, &region)?);
    Ok(())
}
