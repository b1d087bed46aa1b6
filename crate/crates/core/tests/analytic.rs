mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use common::rel;
use cpw_lattice::bands::{bloch_bands, BandMethod, HarmonicWindow, Parallelism};
use cpw_lattice::bloch::k_grid;
use cpw_lattice::circuit::build_matrices;
use cpw_lattice::device::{parse_device, Boundary, LoadOptions, Parity};
use cpw_lattice::modes::solve_modes;
use cpw_lattice::presets::{chain, dimer, rhombus_chain, single_resonator};
use cpw_lattice::units::{ff, nh};
use cpw_lattice::Error;

fn freqs(d: &cpw_lattice::device::DeviceSpec) -> Vec<f64> {
    solve_modes(&build_matrices(d).unwrap()).unwrap().freqs
}

#[test]
fn uncoupled_resonator_has_integer_harmonics() {
    for m in [1, 3, 20, 57, 100] {
        let w = freqs(&single_resonator(400.0, 2.5, m));
        let w0 = 1.0 / (nh(2.5) * ff(400.0)).sqrt();
        assert_eq!(w.len(), m);
        for (j, x) in w.iter().enumerate() {
            assert!(rel(*x, (j + 1) as f64 * w0) < 1e-12, "M={m} j={}", j + 1);
        }
    }
}

#[test]
fn dimer_symmetric_and_antisymmetric_modes() {
    let (c0, cc, l0) = (ff(400.0), ff(4.0), nh(2.5));
    let expect = [1.0 / (l0 * (c0 + 2.0 * cc)).sqrt(), 1.0 / (l0 * c0).sqrt()];
    for (pa, pb) in [(Parity::Plus, Parity::Plus), (Parity::Plus, Parity::Minus), (Parity::Minus, Parity::Minus)] {
        let w = freqs(&dimer(400.0, 4.0, 2.5, 1, pa, pb));
        assert!(rel(w[0], expect[0]) < 1e-12 && rel(w[1], expect[1]) < 1e-12, "{pa:?}{pb:?}: {w:?}");
    }
}

#[test]
fn periodic_single_mode_chain_matches_dispersion() {
    // C(k) = C0 + 2Cc + 2Cc cos k for − to + coupling at M = 1
    let n = 7;
    let (c0, cc, l0) = (400.0, 6.0, 2.5);
    let w = freqs(&chain(n, c0, cc, l0, 1, Boundary::Periodic));
    let mut expect: Vec<f64> = (0..n)
        .map(|i| {
            let k = 2.0 * PI * i as f64 / n as f64;
            1.0 / (nh(l0) * (ff(c0) + 2.0 * ff(cc) + 2.0 * ff(cc) * k.cos())).sqrt()
        })
        .collect();
    expect.sort_by(f64::total_cmp);
    for (a, b) in w.iter().zip(&expect) {
        assert!(rel(*a, *b) < 1e-12);
    }
}

#[test]
fn bloch_bands_reproduce_finite_periodic_lattice() {
    // The finite periodic lattice's modes are the union of Bloch levels at
    // the commensurate momenta k = 2πn/N.
    let dev = rhombus_chain(2);
    let n = dev.n_cells;
    let mut finite = freqs(&dev);
    finite.sort_by(f64::total_cmp);
    let ks: Vec<f64> = (0..n)
        .map(|i| 2.0 * PI * i as f64 / n as f64)
        .map(|k| if k >= PI { k - 2.0 * PI } else { k })
        .collect();
    for method in [BandMethod::Secular, BandMethod::Dense] {
        let bs = bloch_bands(&dev, &ks, HarmonicWindow { j_lo: 1, j_hi: 2 }, method, Parallelism::serial()).unwrap();
        let mut all: Vec<f64> = bs.bands.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all.len(), finite.len());
        for (a, b) in all.iter().zip(&finite) {
            assert!(rel(*a, *b) < 1e-10, "{method:?}: {a} vs {b}");
        }
    }
}

#[test]
fn secular_and_dense_band_solvers_agree() {
    let dev = rhombus_chain(6);
    let k = k_grid(24);
    let a = bloch_bands(&dev, &k, HarmonicWindow::fw(), BandMethod::Secular, Parallelism::serial()).unwrap();
    let b = bloch_bands(&dev, &k, HarmonicWindow::fw(), BandMethod::Dense, Parallelism::serial()).unwrap();
    for (ra, rb) in a.bands.iter().zip(&b.bands) {
        for (x, y) in ra.iter().zip(rb) {
            assert!(rel(*x, *y) < 1e-10);
        }
    }
}

#[test]
fn shipped_device_file_matches_builtin_preset() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../devices/rhombus_chain.json");
    let text = std::fs::read_to_string(path).unwrap();
    let (d, warnings) = parse_device(&text, LoadOptions::default()).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(d.to_json(), rhombus_chain(4).to_json());
}

#[test]
fn unknown_keys_fail_strict_and_warn_lenient() {
    let mut v = rhombus_chain(2).to_json();
    v["unit_cell"]["colour"] = serde_json::json!("blue");
    let text = v.to_string();
    match parse_device(&text, LoadOptions::default()) {
        Err(Error::Validation { path, .. }) => assert_eq!(path, "unit_cell.colour"),
        other => panic!("expected a validation error, got {other:?}"),
    }
    let (_, w) = parse_device(&text, LoadOptions { lenient: true }).unwrap();
    assert_eq!(w.len(), 1);
    assert!(matches!(parse_device("{", LoadOptions::default()), Err(Error::Parse(_))));
}

#[test]
fn dangling_coupler_reference_is_reported() {
    let mut v = rhombus_chain(2).to_json();
    v["unit_cell"]["couplers"][0]["a"] = serde_json::json!([17, "+"]);
    let err = parse_device(&v.to_string(), LoadOptions::default()).unwrap_err();
    assert!(matches!(err, Error::DanglingReference { .. }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dimer_closed_form(c0 in 50.0f64..800.0, cc in 0.01f64..20.0, l0 in 0.5f64..10.0) {
        let w = freqs(&dimer(c0, cc, l0, 1, Parity::Plus, Parity::Plus));
        let lo = 1.0 / (nh(l0) * (ff(c0) + 2.0 * ff(cc))).sqrt();
        let hi = 1.0 / (nh(l0) * ff(c0)).sqrt();
        prop_assert!(rel(w[0], lo) < 1e-12);
        prop_assert!(rel(w[1], hi) < 1e-12);
    }

    #[test]
    fn single_resonator_harmonics(c0 in 50.0f64..800.0, l0 in 0.5f64..10.0, m in 1usize..40) {
        let w = freqs(&single_resonator(c0, l0, m));
        let w0 = 1.0 / (nh(l0) * ff(c0)).sqrt();
        for (j, x) in w.iter().enumerate() {
            prop_assert!(rel(*x, (j + 1) as f64 * w0) < 1e-12);
        }
    }

    #[test]
    fn capacitance_matrix_is_symmetric_positive(cc in 0.1f64..30.0, m in 1usize..5) {
        let d = rhombus_chain(m).with_uniform_elements(392.0, cc, cc / 2.0);
        let mats = build_matrices(&d).unwrap();
        let c = &mats.cap;
        prop_assert!((c - c.transpose()).amax() == 0.0);
        prop_assert!(c.clone().cholesky().is_some());
    }
}
