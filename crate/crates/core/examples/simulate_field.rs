//! Generate a layered medium, simulate an attenuating wave through it and
//! check the result against the discrete equation.
//!
//! cargo run --release --example simulate_field -- [out_dir]

use std::path::PathBuf;

use sdpinn::baselines::fd_derivatives;
use sdpinn::evalio::formats::{write_coefficients, write_wavefield};
use sdpinn::evalio::render::{render_panels, Panel};
use sdpinn::field::{GridSpec, Quantity};
use sdpinn::wavesim::{has_exact_rank, make_lowrank_field, max_stable_dt, simulate, InitialCondition};

fn main() -> sdpinn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "simulate_out".into()));
    std::fs::create_dir_all(&out)?;

    let grid = GridSpec::new(30, 30, 198);
    let c2 = make_lowrank_field(&grid, 3, (1.0, 4.0), Quantity::SpeedSquared, 11)?;
    let alpha = make_lowrank_field(&grid, 2, (0.0, 5.0), Quantity::Attenuation, 12)?;
    println!(
        "c2 in [{:.2}, {:.2}] rank 3: {}, alpha in [{:.2}, {:.2}] rank 2: {}",
        c2.min(),
        c2.max(),
        has_exact_rank(&c2.values, 3),
        alpha.min(),
        alpha.max(),
        has_exact_rank(&alpha.values, 2)
    );
    println!("dt = {} (stable below {:.4})", grid.dt, max_stable_dt(&c2, &grid));

    let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, 13)?;

    // residual of the damped wave equation from centred differences
    let (mut res, mut utt) = (0.0, 0.0);
    for i in 1..grid.m1 - 1 {
        for j in 1..grid.m2 - 1 {
            let s = fd_derivatives(&field, None, i, j)?;
            for (k, lap) in s.laplacian().iter().enumerate() {
                let r = s.u_tt[k] + alpha.get(i, j) * s.u_t[k] - c2.get(i, j) * lap;
                res += r * r;
                utt += s.u_tt[k] * s.u_tt[k];
            }
        }
    }
    println!("relative residual {:.2e}", (res / utt).sqrt());

    write_wavefield(&out.join("field.sdpw"), &field)?;
    write_coefficients(&out.join("c2.sdpc"), &c2)?;
    write_coefficients(&out.join("alpha.sdpc"), &alpha)?;
    let frames: Vec<_> = [0, 40, 80, 120].iter().map(|&n| field.frame(n)).collect();
    let panels: Vec<Panel> = frames.iter().map(|f| Panel { values: f, mask: None }).collect();
    render_panels(&out.join("frames.ppm"), &panels, None, 6)?;
    println!("wrote {}", out.display());
    Ok(())
}
