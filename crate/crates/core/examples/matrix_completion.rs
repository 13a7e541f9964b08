//! Singular value thresholding on a rank-3 matrix with 60% of its entries
//! observed, over a small sweep of thresholds.
//!
//! cargo run --release --example matrix_completion

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdpinn::baselines::{default_tau, svt_complete, tau_grid, SvtConfig};
use sdpinn::field::GridSpec;
use sdpinn::lowrank::project;
use sdpinn::wavesim::{sample_mask, MaskKind};

fn main() -> sdpinn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::new(0.0, 1.0).unwrap();
    let u = DMatrix::from_fn(30, 3, |_, _| n.sample(&mut rng));
    let v = DMatrix::from_fn(30, 3, |_, _| n.sample(&mut rng));
    let truth = &u * v.transpose();

    let mask = sample_mask(&GridSpec::new(30, 30, 1), MaskKind::RandomFraction(0.6), 8)?;
    let known = project(&mask, &truth)?;
    let base = default_tau(&known, (30, 30));
    for tau in tau_grid(base / 4.0, base * 4.0, 5) {
        let cfg = SvtConfig { tau: Some(tau), max_iters: 3000, tol: 1e-7, ..SvtConfig::default() };
        let out = svt_complete(&known, (30, 30), &cfg)?;
        let err = (&out.matrix - &truth).norm() / truth.norm();
        println!("tau {tau:8.2}: {} iterations, relative error {err:.2e}", out.iterations);
    }
    Ok(())
}
