//! Run a named experiment, or one described by a JSON file, and write all of
//! its artifacts.
//!
//! cargo run --release --example run_preset -- desk_table4_baselines out/
//! cargo run --release --example run_preset -- my_preset.json out/

use std::path::PathBuf;

use sdpinn::evalio::{find_preset, run_preset, ExperimentPreset};

fn main() -> sdpinn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "desk_table1_clean_full_r5".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "preset_out".into()));
    let preset = if which.ends_with(".json") {
        ExperimentPreset::from_json(&std::fs::read_to_string(&which)?)?
    } else {
        find_preset(&which)?
    };
    let outcome = run_preset(&preset, Some(&out))?;
    for r in &outcome.reports {
        println!("{:<40} alpha {:?} c2 {:.4}", r.preset, r.rmse_alpha, r.rmse_c2);
    }
    Ok(())
}
