//! Recover attenuation and squared phase speed together from half of the
//! locations, with the coefficients given on the right and bottom edges and
//! the diagonal. Rank budgets exceed the true ranks.
//!
//! cargo run --release --example recover_attenuation -- [epochs]

use sdpinn::evalio::rmse;
use sdpinn::field::{GridSpec, Quantity};
use sdpinn::losses::LossWeights;
use sdpinn::lowrank::coverage_stats;
use sdpinn::mlp::MlpConfig;
use sdpinn::trainer::{train, TermSpec, TrainConfig, TrainingData};
use sdpinn::wavesim::{make_lowrank_field, sample_mask, sample_within, simulate, InitialCondition, MaskKind};

fn main() -> sdpinn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("debug")).init();
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);

    let grid = GridSpec::new(14, 14, 80);
    let c2 = make_lowrank_field(&grid, 3, (1.0, 4.0), Quantity::SpeedSquared, 1)?;
    let alpha = make_lowrank_field(&grid, 2, (0.0, 5.0), Quantity::Attenuation, 2)?;
    let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, 3)?;

    let omega = sample_mask(&grid, MaskKind::Rbd, 0)?;
    let cov = coverage_stats(&omega);
    println!("{} given entries over {} rows and {} columns", cov.count, cov.distinct_rows, cov.distinct_cols);
    let measured = sample_within(&omega.complement(), 0.5, 4)?;

    // the first term is -alpha, the coefficient of u_t on the right-hand side
    let neg_alpha = alpha.negated_attenuation();
    let given = vec![
        omega.iter().map(|(i, j)| (i, j, neg_alpha.get(i, j))).collect(),
        omega.iter().map(|(i, j)| (i, j, c2.get(i, j))).collect(),
    ];
    let data = TrainingData { field, measured, given };
    let config = TrainConfig {
        epochs,
        learning_rate: 3e-3,
        weights: LossWeights { w_f: 3e-4, ..LossWeights::default() },
        collocation_frames: 4,
        data_batch: 2048,
        network: MlpConfig::new(4, 32)?,
        terms: vec![
            TermSpec { quantity: Quantity::NegAttenuation, rank: 5 },
            TermSpec { quantity: Quantity::SpeedSquared, rank: 5 },
        ],
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(&data, &config)?;
    let region = omega.complement();
    println!("rmse_alpha {:.4}", rmse(&out.fields[0], &alpha, &region)?);
    println!("rmse_c2    {:.4}", rmse(&out.fields[1], &c2, &region)?);
    Ok(())
}
