use nalgebra::DMatrix;
use proptest::prelude::*;

use sdpinn::evalio::formats::{
    read_checkpoint, read_coefficients, read_mask, read_wavefield, write_checkpoint, write_coefficients, write_mask,
    write_wavefield,
};
use sdpinn::evalio::{find_preset, presets, rmse, ExperimentPreset, PresetData};
use sdpinn::field::{CoefficientField, GridSpec, Mask, Quantity, WaveField};
use sdpinn::losses::loss_si;
use sdpinn::lowrank::CoefficientSet;
use sdpinn::mlp::{init_params, MlpConfig};
use sdpinn::trainer::{train, TermSpec};
use sdpinn::wavesim::{make_lowrank_field, sample_mask, MaskKind};

fn small_grid() -> impl Strategy<Value = GridSpec> {
    (3usize..8, 3usize..8, 2usize..6).prop_map(|(a, b, t)| GridSpec::new(a, b, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wavefield_file_round_trip(grid in small_grid(), seed in any::<u64>()) {
        let n = grid.m1 * grid.m2 * grid.t;
        let data: Vec<f64> = (0..n).map(|k| ((k as u64 ^ seed) % 1000) as f64 * 1e-3 - 0.5).collect();
        let field = WaveField::from_data(grid, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.sdpw");
        write_wavefield(&path, &field).unwrap();
        prop_assert_eq!(read_wavefield(&path).unwrap(), field);
    }

    #[test]
    fn mask_file_round_trip(grid in small_grid(), seed in any::<u64>(), frac in 0.05f64..1.0) {
        let mask = sample_mask(&grid, MaskKind::RandomFraction(frac), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sdpm");
        write_mask(&path, &mask).unwrap();
        prop_assert_eq!(read_mask(&path).unwrap(), mask);
    }

    #[test]
    fn coefficient_file_round_trip(grid in small_grid(), rank in 1usize..3, seed in any::<u64>()) {
        let rank = rank.min(grid.m1.min(grid.m2));
        let c2 = make_lowrank_field(&grid, rank, (1.0, 4.0), Quantity::SpeedSquared, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.sdpc");
        write_coefficients(&path, &c2).unwrap();
        prop_assert_eq!(read_coefficients(&path, Quantity::SpeedSquared).unwrap(), c2);
    }

    #[test]
    fn mask_complement_partitions(grid in small_grid(), seed in any::<u64>(), frac in 0.05f64..1.0) {
        let mask = sample_mask(&grid, MaskKind::RandomFraction(frac), seed).unwrap();
        let rest = mask.complement();
        prop_assert!(mask.intersection(&rest).is_empty());
        prop_assert_eq!(mask.union(&rest).count(), grid.m1 * grid.m2);
    }

    #[test]
    fn rmse_of_a_shift_is_the_shift(shift in -3.0f64..3.0, seed in any::<u64>()) {
        let grid = GridSpec::new(6, 5, 2);
        let truth = make_lowrank_field(&grid, 2, (1.0, 4.0), Quantity::SpeedSquared, seed).unwrap();
        let moved = CoefficientField::new(truth.values.add_scalar(shift), Quantity::SpeedSquared);
        let r = rmse(&moved, &truth, &Mask::full(6, 5)).unwrap();
        prop_assert!((r - shift.abs()).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip() {
    let params = init_params(MlpConfig::new(3, 7).unwrap(), 4);
    let coeffs = CoefficientSet::init(5, 6, &[(Quantity::NegAttenuation, 2), (Quantity::SpeedSquared, 3)], 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.sdpt");
    write_checkpoint(&path, &params, &coeffs).unwrap();
    let (p, c) = read_checkpoint(&path).unwrap();
    assert_eq!(p, params);
    assert_eq!(c, coeffs);
}

#[test]
fn every_named_preset_survives_json() {
    for preset in presets() {
        let back = ExperimentPreset::from_json(&preset.to_json().unwrap()).unwrap();
        assert_eq!(back, preset, "{}", preset.name);
    }
}

#[test]
fn training_drives_sign_violations_out() {
    let mut preset = find_preset("desk_table3_clean_m50_r23").unwrap();
    preset.grid = GridSpec::new(8, 8, 24);
    preset.train.epochs = 400;
    preset.train.network = MlpConfig::new(3, 12).unwrap();
    preset.train.data_batch = 256;
    preset.train.collocation_frames = 2;
    let data = PresetData::generate(&preset).unwrap();
    let terms: Vec<TermSpec> = preset.train.terms.clone();
    let out = train(&data.training_data(&terms), &preset.train).unwrap();
    let coeffs = &out.state.coeffs;
    let mass: f64 = coeffs.composed().iter().map(|m: &DMatrix<f64>| m.abs().sum()).sum();
    assert!(loss_si(coeffs) <= 1e-6 * mass, "sign loss {} vs mass {mass}", loss_si(coeffs));
    assert_eq!(out.state.history.len(), 400);
}
