//! Transmon parameters from circuit elements and the qubit–normal-mode
//! coupling table.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::bands::{bloch_bands, detect_flat_bands, HarmonicWindow, Parallelism, BandMethod, FlatBandReport};
use crate::bloch::k_grid;
use crate::device::{Boundary, DeviceSpec, TransmonSpec};
use crate::error::{Error, Result};
use crate::modes::NormalModeSet;
use crate::tight_binding::TbModel;
use crate::units::{ELEMENTARY_CHARGE as E, HBAR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmonParams {
    /// E_J/ħ (rad/s).
    pub ej: f64,
    pub lq: f64,
    /// Quartic coefficient α̃ of −α̃χ⁴ (J/Wb⁴).
    pub alpha_tilde: f64,
    pub c_sigma: f64,
    pub omega_h: f64,
    /// Anharmonicity (rad/s, positive).
    pub alpha: f64,
    /// Dressed qubit frequency Ω = ω_h − α.
    pub omega_q: f64,
    /// Flux zero-point amplitude (Wb).
    pub chi_zpf: f64,
}

/// Flux folded into [0, 1] using periodicity 2 and the symmetry f → −f.
pub fn reduce_flux(flux: f64) -> f64 {
    let f = flux.abs().rem_euclid(2.0);
    if f > 1.0 {
        2.0 - f
    } else {
        f
    }
}

/// E_J = 2E_J0·cos(π·flux) for a symmetric SQUID.
pub fn effective_ej(ej0: f64, flux: f64) -> Result<f64> {
    let c = (PI * reduce_flux(flux)).cos();
    if !(c > 1e-12) {
        return Err(Error::FluxSweetSpot { flux });
    }
    Ok(2.0 * ej0 * c)
}

pub fn transmon_params_raw(ej0: f64, flux: f64, c_sigma: f64) -> Result<TransmonParams> {
    if !(ej0 > 0.0) || !(c_sigma > 0.0) {
        return Err(Error::Domain("E_J0 and C_Σ must be positive".into()));
    }
    let ej = effective_ej(ej0, flux)?;
    let lq = HBAR / (4.0 * E * E * ej);
    let two_e = 2.0 * E / HBAR;
    let alpha_tilde = HBAR * ej * two_e.powi(4) / 24.0;
    let chi_zpf = (HBAR * HBAR * lq / (4.0 * c_sigma)).powf(0.25);
    let alpha = 12.0 * alpha_tilde * chi_zpf.powi(4) / HBAR;
    let omega_h = 1.0 / (c_sigma * lq).sqrt();
    Ok(TransmonParams { ej, lq, alpha_tilde, c_sigma, omega_h, alpha, omega_q: omega_h - alpha, chi_zpf })
}

pub fn transmon_params(spec: &TransmonSpec) -> Result<TransmonParams> {
    transmon_params_raw(spec.ej0(), spec.flux, spec.cq() + spec.cc_prime())
}

/// Lowest three levels of ω_h(a†a + ½) − (α/12)(a + a†)⁴ on `levels`
/// oscillator states, i.e. H = n²/(2C_Σ) + χ²/(2L_q) − α̃χ⁴ with
/// χ = χ_zpf(a + a†). The quartic well is unbounded below, so the truncated
/// basis also holds spurious deep states; levels are picked by their
/// largest overlap with the number states |0⟩, |1⟩, |2⟩.
pub fn quartic_levels(p: &TransmonParams, levels: usize) -> [f64; 3] {
    let n = levels;
    let x = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j {
            (j as f64).sqrt()
        } else if j + 1 == i {
            (i as f64).sqrt()
        } else {
            0.0
        }
    });
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let mut h = x4 * (-p.alpha / 12.0);
    for i in 0..n {
        h[(i, i)] += p.omega_h * (i as f64 + 0.5);
    }
    let e = h.symmetric_eigen();
    let pick = |bare: usize| {
        let c = (0..n)
            .max_by(|&a, &b| e.eigenvectors[(bare, a)].abs().total_cmp(&e.eigenvectors[(bare, b)].abs()))
            .unwrap_or(0);
        e.eigenvalues[c]
    };
    [pick(0), pick(1), pick(2)]
}

/// (E_1 − E_0, E_2 − E_1) of the quartic Hamiltonian on 40 levels.
pub fn quartic_transitions(p: &TransmonParams) -> (f64, f64) {
    let e = quartic_levels(p, 40);
    (e[1] - e[0], e[2] - e[1])
}

/// g²/Δ, plus a flag set when |g/Δ| > 0.1.
pub fn dispersive_shift(g: f64, delta: f64) -> Result<(f64, bool)> {
    if delta == 0.0 {
        return Err(Error::DivisionByZero("dispersive shift with zero detuning".into()));
    }
    Ok((g * g / delta, (g / delta).abs() > 0.1))
}

/// g between one transmon and one normal mode:
/// (C_c'/2)·√(ω³·Ω/C_Σ)·Σ_j s(j, end)·W[(host, j), mode].
pub fn coupling_strength(
    modes: &NormalModeSet,
    mode: usize,
    host_resonator: usize,
    spec: &TransmonSpec,
    params: &TransmonParams,
) -> Result<f64> {
    let w = modes.end_flux(mode, host_resonator, spec.end)?;
    let om = modes.freqs[mode];
    Ok(0.5 * spec.cc_prime() * (om * om * om * params.omega_q / params.c_sigma).sqrt() * w)
}

#[derive(Debug, Clone)]
pub struct CouplingEntry {
    pub qubit: usize,
    pub mode: usize,
    pub freq: f64,
    pub g: f64,
    pub flatband: bool,
    /// +1 even, −1 odd, 0 mixed or unknown.
    pub parity: i8,
}

#[derive(Debug, Clone)]
pub struct CouplingTable {
    pub qubits: Vec<usize>,
    pub params: Vec<TransmonParams>,
    /// Qubit-major, modes ascending.
    pub entries: Vec<CouplingEntry>,
}

impl CouplingTable {
    pub fn g(&self, qubit: usize, mode: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.qubit == qubit && e.mode == mode).map(|e| e.g)
    }
}

/// Flat bands of the HW and FW families of a periodic device, evaluated on
/// 64 momenta. Empty for open lattices or when cells differ.
pub fn flat_band_catalog(device: &DeviceSpec) -> Vec<FlatBandReport> {
    if device.boundary != Boundary::Periodic || device.cell_loading().is_err() {
        return Vec::new();
    }
    let t = TbModel::from_device(device).map(|m| m.t).unwrap_or(0.0);
    let k = k_grid(64);
    let max_j = device.resonators.iter().map(|r| r.mode_cutoff).min().unwrap_or(0).min(2);
    let mut out = Vec::new();
    for j in 1..=max_j {
        let w = HarmonicWindow::single(j);
        if let Ok(bs) = bloch_bands(device, &k, w, BandMethod::Secular, Parallelism::serial()) {
            if let Ok(f) = detect_flat_bands(device, &bs, t, None) {
                out.extend(f.into_iter().filter(|r| !r.marginal));
            }
        }
    }
    out
}

/// Couplings of the selected transmons to every normal mode. `flux`
/// overrides the device flux per qubit (same order as `qubits`).
pub fn coupling_table(
    device: &DeviceSpec,
    modes: &NormalModeSet,
    qubits: &[usize],
    flux: &[Option<f64>],
    flat_bands: &[FlatBandReport],
) -> Result<CouplingTable> {
    let s = device.n_sites();
    let mut entries = Vec::new();
    let mut params = Vec::new();
    for (n, &q) in qubits.iter().enumerate() {
        let mut spec = device
            .transmons
            .get(q)
            .ok_or_else(|| Error::Index(format!("transmon {q} does not exist")))?
            .clone();
        if let Some(Some(f)) = flux.get(n) {
            spec.flux = *f;
        }
        let p = transmon_params(&spec)?;
        let cell = spec.cell.unwrap_or(0);
        if cell >= device.n_cells {
            return Err(Error::Index(format!("transmon {q} sits in cell {cell} of {}", device.n_cells)));
        }
        let host = cell * s + spec.site;
        for mode in 0..modes.len() {
            let freq = modes.freqs[mode];
            let flatband = flat_bands.iter().any(|f| (freq - f.center).abs() <= f.tol.max(f.bandwidth));
            entries.push(CouplingEntry {
                qubit: q,
                mode,
                freq,
                g: coupling_strength(modes, mode, host, &spec, &p)?,
                flatband,
                parity: modes.parity[mode],
            });
        }
        params.push(p);
    }
    Ok(CouplingTable { qubits: qubits.to_vec(), params, entries })
}
