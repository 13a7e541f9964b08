//! The two classical pipelines on half of the locations of an attenuating
//! field: spline interpolation followed by per-location least squares, and
//! least squares where the stencil is measured followed by matrix completion.
//!
//! cargo run --release --example baselines

use sdpinn::baselines::{baseline1_pipeline, baseline2_pipeline, GivenValues, LocationFlag, SvtConfig};
use sdpinn::evalio::rmse;
use sdpinn::field::{GridSpec, Mask, Quantity};
use sdpinn::wavesim::{make_lowrank_field, sample_mask, sample_within, simulate, InitialCondition, MaskKind};

fn main() -> sdpinn::Result<()> {
    let grid = GridSpec::new(30, 30, 198);
    let c2 = make_lowrank_field(&grid, 3, (1.0, 4.0), Quantity::SpeedSquared, 1)?;
    let alpha = make_lowrank_field(&grid, 2, (0.0, 5.0), Quantity::Attenuation, 2)?;
    let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, 3)?;
    let omega = sample_mask(&grid, MaskKind::Rbd, 0)?;
    let measured = sample_within(&omega.complement(), 0.5, 4)?;

    let interior = Mask::from_indices(30, 30, (1..29).flat_map(|i| (1..29).map(move |j| (i, j))))?;
    let region = omega.complement().intersection(&interior);

    let b1 = baseline1_pipeline(&field, &measured)?;
    let have = region.intersection(&b1.estimated());
    println!(
        "baseline-1: rmse_alpha {:.3} rmse_c2 {:.3} over {} locations",
        rmse(&b1.alpha, &alpha, &have)?,
        rmse(&b1.c2, &c2, &have)?,
        have.count()
    );

    let given = GivenValues {
        alpha: omega.iter().map(|(i, j)| (i, j, alpha.get(i, j))).collect(),
        c2: omega.iter().map(|(i, j)| (i, j, c2.get(i, j))).collect(),
    };
    let b2 = baseline2_pipeline(&field, &measured, &given, &SvtConfig::default())?;
    let seeded = b2.flags.iter().filter(|f| **f == LocationFlag::Estimated).count();
    println!(
        "baseline-2: {seeded} fitted locations + {} given; rmse_alpha {:.3} rmse_c2 {:.3}",
        omega.count(),
        rmse(&b2.alpha, &alpha, &region)?,
        rmse(&b2.c2, &c2, &region)?
    );
    b2.write_csv(std::path::Path::new("baseline2_locations.csv"))?;
    Ok(())
}
