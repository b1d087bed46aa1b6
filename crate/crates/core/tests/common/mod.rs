//! Reference calculations written independently of the library code paths.
#![allow(dead_code)]

use nalgebra::DMatrix;

use cpw_lattice::device::DeviceSpec;
use cpw_lattice::presets::{rhombus_chain, RHOMBUS_C0_FF};
use cpw_lattice::units::{ELEMENTARY_CHARGE as E, HBAR};

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Rhombus chain with C_c = ratio·C_0 and paddles C_c' = C_c/2.
pub fn rhombus_ratio(m: usize, ratio: f64) -> DeviceSpec {
    let c0 = RHOMBUS_C0_FF;
    rhombus_chain(m).with_uniform_elements(c0, ratio * c0, 0.5 * ratio * c0)
}

/// Same lattice without any transmon or paddle loading.
pub fn bare_rhombus_ratio(m: usize, ratio: f64) -> DeviceSpec {
    let mut d = rhombus_ratio(m, ratio);
    d.transmons.clear();
    d.transmon_loading_everywhere = false;
    d.paddle_cc_prime_ff = 0.0;
    d
}

/// Lowest three levels (rad/s) of H = n²/2C_Σ + χ²/2L_q − α̃χ⁴ built from
/// E_J (rad/s) and C_Σ in an `n`-level oscillator basis. Levels are picked
/// by overlap with the bare number states, since the truncated quartic well
/// also has spurious deep states.
pub fn quartic_oracle_levels(ej: f64, c_sigma: f64, n: usize) -> [f64; 3] {
    let two_e = 2.0 * E / HBAR;
    let lq = 1.0 / (two_e * two_e * HBAR * ej);
    let alpha_t = HBAR * ej * two_e.powi(4) / 24.0;
    let z = (lq / c_sigma).sqrt();
    let phi_zpf = (HBAR * z / 2.0).sqrt();
    let q_zpf = (HBAR / (2.0 * z)).sqrt();
    // φ = φ_zpf(a + a†), Q = i q_zpf(a† − a)
    let a = DMatrix::<f64>::from_fn(n, n, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 });
    let x = &a + a.transpose();
    let p = a.transpose() - &a; // Q = i q_zpf p, so Q² = −q_zpf² p²
    let q2 = (&p * &p) * (-q_zpf * q_zpf);
    let phi = &x * phi_zpf;
    let phi2 = &phi * &phi;
    let h = q2 / (2.0 * c_sigma) + &phi2 / (2.0 * lq) - (&phi2 * &phi2) * alpha_t;
    let h = h / HBAR;
    let h = (&h + h.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let pick = |bare: usize| {
        let mut best = 0;
        for c in 0..n {
            if eig.eigenvectors[(bare, c)].abs() > eig.eigenvectors[(bare, best)].abs() {
                best = c;
            }
        }
        eig.eigenvalues[best]
    };
    [pick(0), pick(1), pick(2)]
}

/// Normal-mode frequencies of two capacitively coupled LC oscillators,
/// C φ̈ = −L⁻¹ φ with C = [[c11, −cm], [−cm, c22]].
pub fn two_mode_frequencies(c11: f64, c22: f64, cm: f64, l1: f64, l2: f64) -> (f64, f64) {
    // ω² are the eigenvalues of C⁻¹ L⁻¹
    let det = c11 * c22 - cm * cm;
    let (a, b, c, d) = (c22 / (det * l1), cm / (det * l2), cm / (det * l1), c11 / (det * l2));
    let tr = a + d;
    let dt = a * d - b * c;
    let disc = (tr * tr - 4.0 * dt).sqrt();
    (((tr - disc) / 2.0).sqrt(), ((tr + disc) / 2.0).sqrt())
}

/// Single-excitation Jaynes–Cummings energies relative to the ground state.
pub fn jc_pair(omega_q: f64, omega_r: f64, g: f64) -> (f64, f64) {
    let mean = 0.5 * (omega_q + omega_r);
    let half = 0.5 * (omega_q - omega_r);
    let s = (half * half + g * g).sqrt();
    (mean - s, mean + s)
}

/// Ordinary least squares slope of y against x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
