mod common;

use common::{jc_pair, quartic_oracle_levels, rel, two_mode_frequencies};
use cpw_lattice::circuit::build_matrices;
use cpw_lattice::device::{Parity, TransmonSpec};
use cpw_lattice::modes::solve_modes;
use cpw_lattice::presets::{rhombus_chain, single_resonator};
use cpw_lattice::transmon::{
    coupling_table, dispersive_shift, quartic_levels, quartic_transitions, transmon_params, transmon_params_raw,
};
use cpw_lattice::units::{charging_energy, ff, ghz, nh};

fn qubit(cc_prime_ff: f64) -> TransmonSpec {
    TransmonSpec {
        site: 0,
        end: Parity::Plus,
        cq_ff: 151.0,
        ej0_ghz: 54.4,
        flux: 0.21,
        cc_prime_ff,
        cell: Some(0),
        label: None,
    }
}

/// Relative error of the first-order anharmonicity against the quartic
/// oracle, in units of α/ω_h.
fn alpha_error(ej_over_ec: f64) -> (f64, f64) {
    let c_sigma = ff(150.0);
    let ej = ej_over_ec * charging_energy(c_sigma);
    let p = transmon_params_raw(ej / 2.0, 0.0, c_sigma).unwrap();
    let e = quartic_oracle_levels(p.ej, c_sigma, 40);
    let alpha_oracle = (e[1] - e[0]) - (e[2] - e[1]);
    let err = (p.alpha - alpha_oracle) / alpha_oracle;
    (err, err.abs() / (p.alpha / p.omega_h))
}

#[test]
fn library_quartic_levels_match_independent_build() {
    for flux in [0.0, 0.21, 0.4] {
        let p = transmon_params_raw(ghz(54.4), flux, ff(155.0)).unwrap();
        let a = quartic_levels(&p, 40);
        let b = quartic_oracle_levels(p.ej, p.c_sigma, 40);
        for (x, y) in a.iter().zip(&b) {
            assert!(rel(*x, *y) < 1e-9, "flux {flux}: {x} vs {y}");
        }
        let (w01, w12) = quartic_transitions(&p);
        assert!(w12 < w01);
    }
}

#[test]
fn first_order_anharmonicity_error_is_second_order_small() {
    // The quartic α = E_C misses the next order, ≈ 4.25·(α/ω_h) relative.
    let mut prev = f64::INFINITY;
    for r in [50.0, 200.0, 1e3, 1e4, 1e5] {
        let (err, scaled) = alpha_error(r);
        assert!(err.abs() < prev);
        prev = err.abs();
        if r >= 1e4 {
            assert!((scaled - 4.25).abs() < 0.5, "E_J/E_C = {r}: {scaled}");
        }
    }
    assert!(alpha_error(1e4).0.abs() < 0.02);
}

#[test]
fn avoided_crossing_splitting_is_twice_g() {
    let spec = qubit(2.0);
    let p = transmon_params(&spec).unwrap();
    let c_r = ff(392.0) + spec.cc_prime();
    // tune the resonator onto the dressed qubit frequency
    let l0 = 1.0 / (p.omega_q * p.omega_q * c_r);
    let mut dev = single_resonator(392.0, l0 / nh(1.0), 1);
    dev.transmons.push(spec.clone());
    let modes = solve_modes(&build_matrices(&dev).unwrap()).unwrap();
    assert!(rel(modes.freqs[0], p.omega_q) < 1e-12);
    let g = coupling_table(&dev, &modes, &[0], &[None], &[]).unwrap().g(0, 0).unwrap();

    // qubit as a linear element resonating at Ω behind the same capacitances
    let l_eff = 1.0 / (p.omega_q * p.omega_q * p.c_sigma);
    let (lo, hi) = two_mode_frequencies(c_r, p.c_sigma, spec.cc_prime(), l0, l_eff);
    let split = hi - lo;
    assert!(rel(split, 2.0 * g.abs()) < 0.01, "split {split}, 2g {}", 2.0 * g);
}

#[test]
fn dispersive_shift_agrees_with_jaynes_cummings() {
    let (wq, g) = (ghz(6.0), ghz(0.05));
    for ratio in [0.01, 0.02, 0.05] {
        let delta = g / ratio;
        let wr = wq - delta;
        let (_, upper) = jc_pair(wq, wr, g);
        let exact = upper - wq;
        let (chi, flag) = dispersive_shift(g, delta).unwrap();
        assert!(!flag);
        assert!(rel(chi, exact) <= 2.0 * ratio * ratio);
    }
    assert!(dispersive_shift(g, g / 0.2).unwrap().1);
    assert!(dispersive_shift(g, 0.0).is_err());
}

#[test]
fn coupling_sum_rule() {
    // Σ_m g_m²/ω_m³ = (C'/2)²·(Ω/C_Σ)·Σ_j L_j for the host resonator, since
    // the flux eigenvectors are orthonormal.
    let dev = rhombus_chain(3);
    let modes = solve_modes(&build_matrices(&dev).unwrap()).unwrap();
    let tab = coupling_table(&dev, &modes, &[0, 1, 2], &[None, None, None], &[]).unwrap();
    for (n, &q) in tab.qubits.iter().enumerate() {
        let spec = &dev.transmons[q];
        let p = &tab.params[n];
        let l0 = dev.resonators[spec.site].l0();
        let sum_l: f64 = (1..=3).map(|j| l0 / (j * j) as f64).sum();
        let expect = (0.5 * spec.cc_prime()).powi(2) * p.omega_q / p.c_sigma * sum_l;
        let got: f64 = tab.entries.iter().filter(|e| e.qubit == q).map(|e| e.g * e.g / e.freq.powi(3)).sum();
        assert!(rel(got, expect) < 1e-9, "Q{}: {got} vs {expect}", q + 1);
    }
}

#[test]
fn on_axis_qubit_decouples_from_odd_modes() {
    let dev = rhombus_chain(2);
    let modes = solve_modes(&build_matrices(&dev).unwrap()).unwrap();
    let tab = coupling_table(&dev, &modes, &[1], &[None], &[]).unwrap();
    let gmax = tab.entries.iter().map(|e| e.g.abs()).fold(0.0, f64::max);
    let odd: Vec<f64> = tab.entries.iter().filter(|e| e.parity == -1).map(|e| e.g.abs()).collect();
    assert!(!odd.is_empty());
    assert!(odd.iter().all(|g| *g < 1e-9 * gmax));
}

#[test]
fn flux_is_periodic_and_zero_paddle_decouples() {
    let dev = rhombus_chain(1);
    let modes = solve_modes(&build_matrices(&dev).unwrap()).unwrap();
    let a = coupling_table(&dev, &modes, &[0], &[Some(0.21)], &[]).unwrap();
    let b = coupling_table(&dev, &modes, &[0], &[Some(2.21)], &[]).unwrap();
    let c = coupling_table(&dev, &modes, &[0], &[Some(-0.21)], &[]).unwrap();
    for ((x, y), z) in a.entries.iter().zip(&b.entries).zip(&c.entries) {
        assert!((x.g - y.g).abs() <= 1e-12 * x.g.abs().max(1.0));
        assert_eq!(x.g, z.g);
    }
    assert!(coupling_table(&dev, &modes, &[0], &[Some(0.5)], &[]).is_err());

    let mut spec = qubit(0.0);
    spec.cell = Some(0);
    let mut dev = single_resonator(392.0, 2.5, 3);
    dev.transmons.push(spec);
    let modes = solve_modes(&build_matrices(&dev).unwrap()).unwrap();
    let tab = coupling_table(&dev, &modes, &[0], &[None], &[]).unwrap();
    assert!(tab.entries.iter().all(|e| e.g == 0.0));
}
