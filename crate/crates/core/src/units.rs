//! Physical constants (CODATA 2018 exact values) and unit conversions.
//!
//! Internally everything is SI: farad, henry, second, and angular frequency
//! in rad/s. Energies of quantum elements are stored as angular frequencies
//! (E/ħ).

use std::f64::consts::PI;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

pub const FEMTO: f64 = 1e-15;
pub const NANO: f64 = 1e-9;

pub fn ff(x: f64) -> f64 {
    x * FEMTO
}

pub fn nh(x: f64) -> f64 {
    x * NANO
}

/// Frequency in GHz to angular frequency in rad/s.
pub fn ghz(x: f64) -> f64 {
    2.0 * PI * 1e9 * x
}

/// Frequency in MHz to angular frequency in rad/s.
pub fn mhz(x: f64) -> f64 {
    2.0 * PI * 1e6 * x
}

pub fn to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e9)
}

pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

/// Charging energy E_C/ħ = e²/(2 C ħ) in rad/s.
pub fn charging_energy(c_sigma: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * c_sigma * HBAR)
}

/// Josephson inductance for E_J given as an angular frequency: L = ħ/(4e² E_J).
pub fn josephson_inductance(ej: f64) -> f64 {
    HBAR / (4.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * ej)
}
