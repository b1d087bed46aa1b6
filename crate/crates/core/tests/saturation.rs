mod common;

use common::rel;
use cpw_lattice::bands::sweep;
use cpw_lattice::saturation::{fit_saturation, lindblad_curve, power_slope, steady_state, Ladder};

/// Driven two-level atom: P_ee = E²/(γ²/4 + 2E²) for the drive E(σ⁺ + σ⁻).
fn two_level(e: f64, gamma: f64) -> f64 {
    e * e / (0.25 * gamma * gamma + 2.0 * e * e)
}

#[test]
fn two_level_limit_fits_half() {
    let gamma = 1.0;
    let l = Ladder { delta: 0.0, alpha: 1e4, gamma_e: gamma, gamma_f: gamma };
    let drive = sweep(0.01, 10.0, 41, true);
    let c = lindblad_curve(&drive, &l).unwrap();
    for (e, p) in drive.iter().zip(&c.p_ee) {
        assert!(rel(*p, two_level(*e, gamma)) < 1e-3);
    }
    let (a, b) = fit_saturation(&drive, &c.p_ee).unwrap();
    assert!(rel(a, 0.5) < 0.01, "A = {a}");
    assert!(rel(b, 8.0 / (gamma * gamma)) < 0.01, "B = {b}");
}

#[test]
fn low_power_slopes() {
    let drive = sweep(1e-4, 1e-3, 11, true);
    let resonant = Ladder { delta: 0.0, alpha: 5.0, gamma_e: 0.05, gamma_f: 0.05 };
    let c = lindblad_curve(&drive, &resonant).unwrap();
    assert!((power_slope(&drive, &c.p_ee).unwrap() - 1.0).abs() < 0.05);

    let two_photon = Ladder { delta: -2.5, ..resonant };
    let c = lindblad_curve(&drive, &two_photon).unwrap();
    assert!((power_slope(&drive, &c.p_ff).unwrap() - 2.0).abs() < 0.1);
}

#[test]
fn steady_state_is_a_density_matrix() {
    let l = Ladder { delta: -0.3, alpha: 0.7, gamma_e: 0.2, gamma_f: 0.4 };
    for e in [0.0, 0.05, 0.5, 3.0] {
        let rho = steady_state(e, &l).unwrap();
        let tr: f64 = (0..3).map(|i| rho[(i, i)].re).sum();
        assert!((tr - 1.0).abs() < 1e-12);
        assert!((&rho - rho.adjoint()).camax() < 1e-12);
        let ev = nalgebra::DMatrix::from_fn(6, 6, |i, j| {
            // real embedding of the Hermitian matrix
            let z = rho[(i % 3, j % 3)];
            match (i < 3, j < 3) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
        .symmetric_eigenvalues();
        assert!(ev.iter().all(|x| *x > -1e-12));
    }
    assert!(steady_state(1.0, &Ladder { gamma_e: 0.0, ..l }).is_err());
}
