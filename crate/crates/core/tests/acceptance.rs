//! Acceptance criteria. Prints one PASS/FAIL line per criterion, single-threaded.
//! The exit status reflects failures only with `--strict`.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use sdpinn::autodiff::{eval_jet, loss_param_gradient, JetOrder, PointGroup};
use sdpinn::baselines::{fd_derivatives, shrink, svt_complete, SvtConfig};
use sdpinn::evalio::{find_preset, run_preset, with_threads, Method, PresetOutcome};
use sdpinn::field::{GridSpec, Quantity};
use sdpinn::losses::loss_si;
use sdpinn::lowrank::project;
use sdpinn::mlp::{forward, init_params, MlpConfig, MlpParams};
use sdpinn::wavesim::{make_lowrank_field, sample_mask, simulate, InitialCondition, MaskKind};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn announce(id: usize, name: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "[{tag}] criterion {id} {name}: {}", v.detail);
}

fn random_net(rng: &mut ChaCha8Rng) -> MlpParams {
    let config = MlpConfig::new(rng.random_range(2..=4), rng.random_range(4..=12)).unwrap();
    let mut params = init_params(config, rng.random());
    // non-zero biases so the oracle sees every parameter block in use
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            if *v == 0.0 {
                *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    params
}

/// Two levels of Richardson extrapolation on a second-order difference.
fn richardson(d: impl Fn(f64) -> f64, h: f64) -> f64 {
    let (a, b, c) = (d(h), d(h / 2.0), d(h / 4.0));
    let (ab, bc) = ((4.0 * b - a) / 3.0, (4.0 * c - b) / 3.0);
    (16.0 * bc - ab) / 15.0
}

fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Loss with value, time-derivative and second space-derivative terms.
fn jet_loss(params: &MlpParams, points: &[[f64; 3]]) -> f64 {
    points
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let j = eval_jet(params, p).unwrap();
            let a = k as f64 * 0.1;
            (j.value - a).powi(2) + (j.u_t() - 0.5).powi(2) + (j.d2[0] + j.d2[1] - 2.0 * j.u_tt()).powi(2)
        })
        .sum()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_jet, mut worst_grad) = (0.0f64, 0.0f64);
    let nets = 100;
    for _ in 0..nets {
        let params = random_net(&mut rng);
        for _ in 0..3 {
            let p: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
            let jet = eval_jet(&params, p).unwrap();
            for k in 0..3 {
                let at = |s: f64| {
                    let mut q = p;
                    q[k] += s;
                    forward(&params, q)
                };
                let d1 = richardson(|h| (at(h) - at(-h)) / (2.0 * h), 1e-2);
                let d2 = richardson(|h| (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h), 1e-2);
                worst_jet = worst_jet.max(rel_err(jet.d1[k], d1, 1e-3)).max(rel_err(jet.d2[k], d2, 1e-3));
            }
        }

        let points: Vec<[f64; 3]> = (0..4).map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))).collect();
        let grad = loss_param_gradient(&params, &[PointGroup { points: &points, order: JetOrder::Second }], |tape, jets| {
            let terms: Vec<_> = jets[0]
                .iter()
                .enumerate()
                .flat_map(|(k, j)| {
                    let a = tape.constant(k as f64 * 0.1);
                    let half = tape.constant(0.5);
                    let r1 = tape.sub(j.value, a);
                    let r2 = tape.sub(j.u_t(), half);
                    let r3 = tape.linear(&[(1.0, j.d2[0]), (1.0, j.d2[1]), (-2.0, j.u_tt())]);
                    [tape.square(r1), tape.square(r2), tape.square(r3)]
                })
                .collect();
            tape.sum(&terms)
        })
        .unwrap();
        let theta = params.to_flat();
        let shifted = |dir: &[f64], s: f64| {
            let moved: Vec<f64> = theta.iter().zip(dir).map(|(t, d)| t + s * d).collect();
            jet_loss(&MlpParams::from_flat(params.config, &moved).unwrap(), &points)
        };
        let gnorm = grad.theta.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut dirs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..theta.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        for _ in 0..3 {
            let mut e = vec![0.0; theta.len()];
            e[rng.random_range(0..theta.len())] = 1.0;
            dirs.push(e);
        }
        for dir in dirs {
            let analytic: f64 = grad.theta.as_slice().iter().zip(&dir).map(|(g, d)| g * d).sum();
            let fd = richardson(|h| (shifted(&dir, h) - shifted(&dir, -h)) / (2.0 * h), 1e-3);
            worst_grad = worst_grad.max(rel_err(analytic, fd, 1e-6 * gnorm.max(1.0)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_jet <= 1e-5 && worst_grad <= 1e-4 && secs < 30.0,
        format!("{nets} nets, max jet rel err {worst_jet:.2e} (<= 1e-5), max gradient rel err {worst_grad:.2e} (<= 1e-4), {secs:.2} s (< 30 s)"),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let grid = GridSpec::new(30, 30, 198);
    let c2 = make_lowrank_field(&grid, 3, (1.0, 4.0), Quantity::SpeedSquared, 2024).unwrap();
    let alpha = make_lowrank_field(&grid, 2, (0.0, 5.0), Quantity::Attenuation, 2025).unwrap();
    let field = simulate(&alpha, &c2, &grid, InitialCondition::GaussianPulse, 2026).unwrap();
    let (mut res, mut utt, mut n) = (0.0, 0.0, 0.0);
    for i in 1..29 {
        for j in 1..29 {
            let s = fd_derivatives(&field, None, i, j).unwrap();
            for (k, lap) in s.laplacian().iter().enumerate() {
                res += (s.u_tt[k] + alpha.get(i, j) * s.u_t[k] - c2.get(i, j) * lap).powi(2);
                utt += s.u_tt[k].powi(2);
                n += 1.0;
            }
        }
    }
    let (res, utt) = ((res / n).sqrt(), (utt / n).sqrt());
    let secs = start.elapsed().as_secs_f64();
    verdict(
        res <= 1e-2 * utt && secs < 10.0,
        format!("residual RMS {res:.3e} vs RMS(u_tt) {utt:.3e} (ratio {:.1e} <= 1e-2), {secs:.2} s (< 10 s)", res / utt),
    )
}

/// Runs a named preset, recording the wall time.
fn run(name: &str) -> (PresetOutcome, f64) {
    let start = Instant::now();
    let preset = find_preset(name).unwrap();
    let out = run_preset(&preset, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut err = std::io::stderr();
    for r in &out.reports {
        let _ = writeln!(err, "    {:<36} rmse_alpha {:>8} rmse_c2 {:.4}  ({secs:.0} s)", r.preset, r.rmse_alpha.map_or("-".into(), |v| format!("{v:.4}")), r.rmse_c2);
    }
    (out, secs)
}

fn sd(out: &PresetOutcome) -> (f64, f64) {
    let r = out.report(Method::Sdpinn).unwrap();
    (r.rmse_alpha.unwrap_or(f64::NAN), r.rmse_c2)
}

fn criterion_3(clean: &(PresetOutcome, f64), noisy: &(PresetOutcome, f64)) -> Verdict {
    let (c, n) = (sd(&clean.0).1, sd(&noisy.0).1);
    let limit = 300.0;
    verdict(
        c <= 0.26 && n <= 1.5 * c && clean.1 < limit && noisy.1 < limit,
        format!(
            "desk RMSE_c2 clean {c:.4} (<= 0.26), 20% noise {n:.4} (<= 1.5x clean = {:.4}), runs {:.0} s / {:.0} s (< 300 s)",
            1.5 * c,
            clean.1,
            noisy.1
        ),
    )
}

fn criterion_4(diag: &PresetOutcome, grid: &PresetOutcome, random: &PresetOutcome) -> Verdict {
    let (d, g, r) = (sd(diag).1, sd(grid).1, sd(random).1);
    verdict(g > d && g > r, format!("RMSE_c2 even grid {g:.4} > diagonal {d:.4} and > random {r:.4}"))
}

fn criterion_5(r55: &PresetOutcome, r23: &PresetOutcome) -> Verdict {
    let ((a55, c55), (a23, c23)) = (sd(r55), sd(r23));
    verdict(
        a55 <= a23 && c55 <= c23,
        format!("r=(5,5) alpha {a55:.4} c2 {c55:.4} vs r=(2,3) alpha {a23:.4} c2 {c23:.4}"),
    )
}

fn criterion_6(out: &PresetOutcome) -> Verdict {
    let c = |m: Method| out.report(m).unwrap().rmse_c2;
    let (s, b1, b2) = (c(Method::Sdpinn), c(Method::Baseline1), c(Method::Baseline2));
    let band = |v: f64, paper: f64| v >= paper / 2.0 && v <= paper * 2.0;
    let bands = band(s, 0.140) && band(b2, 0.810) && band(b1, 0.929);
    verdict(
        s < b2 && b2 < b1 && bands,
        format!(
            "RMSE_c2 sdpinn {s:.4} < baseline-2 {b2:.4} < baseline-1 {b1:.4}; factor-2 bands around 0.140/0.810/0.929: {}",
            if bands { "inside" } else { "outside" }
        ),
    )
}

fn criterion_7() -> Verdict {
    let exact = shrink(&[5.0, 2.0, 0.5], 1.0) == vec![4.0, 1.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = Normal::new(0.0, 1.0).unwrap();
    let u = DMatrix::from_fn(30, 3, |_, _| n.sample(&mut rng));
    let v = DMatrix::from_fn(30, 3, |_, _| n.sample(&mut rng));
    let truth = &u * v.transpose();
    let mask = sample_mask(&GridSpec::new(30, 30, 1), MaskKind::RandomFraction(0.6), 70).unwrap();
    let known = project(&mask, &truth).unwrap();
    let cfg = SvtConfig { max_iters: 2000, tol: 1e-6, ..SvtConfig::default() };
    let out = svt_complete(&known, (30, 30), &cfg).unwrap();
    let err = (&out.matrix - &truth).norm() / truth.norm();
    verdict(
        exact && err <= 1e-2,
        format!("shrink (5,2,0.5) tau 1 -> (4,1,0): {exact}; rank-3 60% observed relative error {err:.2e} (<= 1e-2) after {} iterations", out.iterations),
    )
}

fn criterion_8(runs: &[&PresetOutcome]) -> Verdict {
    let mut worst = 0.0f64;
    for out in runs {
        let coeffs = &out.sdpinn.as_ref().unwrap().state.coeffs;
        let mass: f64 = coeffs.composed().iter().map(|m| m.iter().map(|v| v.abs()).sum::<f64>()).sum();
        worst = worst.max(loss_si(coeffs) / mass);
    }
    verdict(worst <= 1e-6, format!("max loss_si / sum|Lambda| over {} runs: {worst:.2e} (<= 1e-6)", runs.len()))
}

/// Exponential smoothing over a 200-epoch window must end below its value at epoch 200.
fn smoothed_loss_falls(runs: &[&PresetOutcome]) -> Verdict {
    let a = 2.0 / 201.0;
    let mut worst = 0.0f64;
    for out in runs {
        let history = &out.sdpinn.as_ref().unwrap().state.history;
        let mut ema = history[0].total;
        let mut at_200 = ema;
        for (k, row) in history.iter().enumerate() {
            ema += a * (row.total - ema);
            if k == 200 {
                at_200 = ema;
            }
        }
        worst = worst.max(ema / at_200);
    }
    verdict(worst < 1.0, format!("max final / epoch-200 smoothed loss over {} runs: {worst:.3} (< 1)", runs.len()))
}

fn criterion_9(first: &PresetOutcome) -> Verdict {
    let (again, _) = run("desk_table1_clean_full_r5");
    let (a, b) = (sd(first).1, sd(&again).1);
    verdict((a - b).abs() <= 1e-10, format!("RMSE_c2 {a:.12} vs rerun {b:.12}, difference {:.1e} (<= 1e-10)", (a - b).abs()))
}

fn main() {
    let results = with_threads(Some(1), || {
        let mut results = Vec::new();
        let mut record = |id: usize, name: &str, v: Verdict| {
            announce(id, name, &v);
            results.push((id, v.pass));
        };
        record(1, "differentiation oracle", criterion_1());
        record(2, "simulator consistency", criterion_2());
        record(7, "SVT oracle", criterion_7());
        if std::env::args().any(|a| a == "--quick") {
            return results;
        }

        let t1_clean = run("desk_table1_clean_full_r5");
        let t1_noisy = run("desk_table1_n20_full_r5");
        record(3, "non-attenuating recovery", criterion_3(&t1_clean, &t1_noisy));

        let (diag, _) = run("desk_table2_diagonal");
        let (grid, _) = run("desk_table2_grid");
        let (random, _) = run("desk_table2_random");
        record(4, "given-entry placement ordering", criterion_4(&diag, &grid, &random));

        // the table-4 preset trains the same r=(5,5) model as table 3's 50% row
        let (t4, _) = run("desk_table4_baselines");
        let (r23, _) = run("desk_table3_clean_m50_r23");
        record(5, "redundant rank budget", criterion_5(&t4, &r23));
        record(6, "baseline ordering", criterion_6(&t4));

        let all = [&t1_clean.0, &t1_noisy.0, &diag, &grid, &random, &t4, &r23];
        record(8, "sign invariant", criterion_8(&all));
        let v = smoothed_loss_falls(&all);
        let mut err = std::io::stderr();
        let _ = writeln!(err, "[{}] invariant smoothed loss: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        record(9, "single-threaded determinism", criterion_9(&t1_clean.0));
        results
    })
    .unwrap();
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    let mut err = std::io::stderr();
    if failed.is_empty() {
        let _ = writeln!(err, "all {} acceptance criteria passed", results.len());
    } else {
        let _ = writeln!(err, "{} of {} criteria passed, failed: {failed:?}", results.len() - failed.len(), results.len());
        if std::env::args().any(|a| a == "--strict") {
            std::process::exit(1);
        }
    }
}
