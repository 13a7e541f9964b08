//! Input derivatives of a small network by jets, compared with central
//! differences, and a parameter gradient of a loss built from them.
//!
//! cargo run --release --example autodiff_jets

use sdpinn::autodiff::{eval_jet, loss_param_gradient, JetOrder, PointGroup};
use sdpinn::mlp::{forward, init_params, MlpConfig};

fn main() -> sdpinn::Result<()> {
    let params = init_params(MlpConfig::toy(), 5);
    let p = [0.3, -0.2, 0.7];
    let jet = eval_jet(&params, p)?;

    let h = 1e-4;
    let names = ["x", "y", "t"];
    for k in 0..3 {
        let (mut lo, mut hi) = (p, p);
        lo[k] -= h;
        hi[k] += h;
        let (f0, fm, fp) = (forward(&params, p), forward(&params, lo), forward(&params, hi));
        println!(
            "d/d{0}: jet {1:+.8} fd {2:+.8}   d2/d{0}2: jet {3:+.8} fd {4:+.8}",
            names[k],
            jet.d1[k],
            (fp - fm) / (2.0 * h),
            jet.d2[k],
            (fp - 2.0 * f0 + fm) / (h * h)
        );
    }

    // loss = sum over points of (u_tt - 2 lap u)^2
    let points = [[0.1, 0.2, 0.3], [-0.4, 0.5, 0.1], [0.0, -0.3, 0.9]];
    let grad = loss_param_gradient(&params, &[PointGroup { points: &points, order: JetOrder::Second }], |tape, jets| {
        let terms: Vec<_> = jets[0]
            .iter()
            .map(|j| {
                let lap = tape.add(j.d2[0], j.d2[1]);
                let r = tape.linear(&[(1.0, j.u_tt()), (-2.0, lap)]);
                tape.square(r)
            })
            .collect();
        tape.sum(&terms)
    })?;
    let norm = grad.theta.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("loss {:.6e}, gradient over {} parameters, norm {:.4e}", grad.loss, grad.theta.len(), norm);
    Ok(())
}
