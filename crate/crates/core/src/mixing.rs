//! Four-wave mixing between a transmon (q), a monitor mode (m) and an
//! undriven wave-mixing mode (w) under a pump at ω_p.
//!
//! Detunings: Δ_x = ω_p − ω_x and Δ_xy = ω_x − ω_y. In the pump frame the
//! undriven Hamiltonian is
//!
//!   H = −Σ_x Δ_x x†x − (α/2) q†q†qq + g_qw(q†w + w†q) + g_qm(q†m + m†q)
//!
//! and the drive E_p(q + q†) connects the dressed states |0,0,1⟩ and
//! |1,1,0⟩ (occupations ordered n_q, n_w, n_m).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwmProblem {
    pub omega_q: f64,
    pub omega_m: f64,
    pub omega_w: f64,
    pub omega_p: f64,
    pub g_qm: f64,
    pub g_qw: f64,
    pub alpha: f64,
    pub ep: f64,
}

/// ω_p* = ω_q + ω_w − ω_m.
pub fn resonant_pump(omega_q: f64, omega_m: f64, omega_w: f64) -> f64 {
    omega_q + omega_w - omega_m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Tls,
    Transmon,
    SmallAlpha,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Tls => "tls",
            Regime::Transmon => "transmon",
            Regime::SmallAlpha => "small_alpha",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Validity {
    /// |g_qw/Δ_qw| > 0.1.
    pub strong_qw: bool,
    /// |g_qm/Δ_qm| > 0.1.
    pub strong_qm: bool,
    /// |Δ_qw − α| within 10·max(|g|) of the two-photon pole.
    pub near_two_photon: bool,
    /// |E_p/Δ_q| > 0.1.
    pub strong_drive: bool,
    /// |α/Δ_qw| > 0.1 (only relevant for the small-α form).
    pub large_alpha: bool,
}

impl Validity {
    pub fn any(&self) -> bool {
        self.strong_qw || self.strong_qm || self.near_two_photon || self.strong_drive || self.large_alpha
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (on, n) in [
            (self.strong_qw, "strong_qw"),
            (self.strong_qm, "strong_qm"),
            (self.near_two_photon, "near_two_photon"),
            (self.strong_drive, "strong_drive"),
            (self.large_alpha, "large_alpha"),
        ] {
            if on {
                v.push(n);
            }
        }
        v
    }
}

/// Drive-induced overlap. Amplitudes are real: all couplings and the drive
/// are taken real in the pump frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwmAmplitude {
    pub value: f64,
    pub regime: Regime,
    pub validity: Validity,
}

impl FwmProblem {
    pub fn delta(&self, omega_x: f64) -> f64 {
        self.omega_p - omega_x
    }
    pub fn delta_q(&self) -> f64 {
        self.delta(self.omega_q)
    }
    pub fn delta_m(&self) -> f64 {
        self.delta(self.omega_m)
    }
    pub fn delta_w(&self) -> f64 {
        self.delta(self.omega_w)
    }
    pub fn delta_qm(&self) -> f64 {
        self.omega_q - self.omega_m
    }
    pub fn delta_qw(&self) -> f64 {
        self.omega_q - self.omega_w
    }
    pub fn delta_wm(&self) -> f64 {
        self.omega_w - self.omega_m
    }

    /// Energy mismatch ω_m + ω_p − ω_q − ω_w.
    pub fn mismatch(&self) -> f64 {
        self.omega_m + self.omega_p - self.omega_q - self.omega_w
    }

    pub fn validity(&self) -> Validity {
        let gmax = self.g_qw.abs().max(self.g_qm.abs());
        Validity {
            strong_qw: (self.g_qw / self.delta_qw()).abs() > 0.1,
            strong_qm: (self.g_qm / self.delta_qm()).abs() > 0.1,
            near_two_photon: (self.delta_qw() - self.alpha).abs() < 10.0 * gmax,
            strong_drive: (self.ep / self.delta_q()).abs() > 0.1,
            large_alpha: (self.alpha / self.delta_qw()).abs() > 0.1,
        }
    }
}

fn nonzero(x: f64, name: &str) -> Result<f64> {
    if x == 0.0 {
        Err(Error::ResonantDenominator { name: name.into() })
    } else {
        Ok(x)
    }
}

/// 2·E_p·g_qw·g_qm/(Δ_qm·Δ_wm).
pub fn fwm_amplitude_tls(p: &FwmProblem) -> Result<FwmAmplitude> {
    let dqm = nonzero(p.delta_qm(), "delta_qm")?;
    let dwm = nonzero(p.delta_wm(), "delta_wm")?;
    let mut validity = p.validity();
    validity.large_alpha = false;
    validity.near_two_photon = false;
    Ok(FwmAmplitude { value: 2.0 * p.ep * p.g_qw * p.g_qm / (dqm * dwm), regime: Regime::Tls, validity })
}

/// −2·E_p·g_qw·g_qm·α/(Δ_qm·Δ_wm·(Δ_qw − α)).
pub fn fwm_amplitude_transmon(p: &FwmProblem) -> Result<FwmAmplitude> {
    let dqm = nonzero(p.delta_qm(), "delta_qm")?;
    let dwm = nonzero(p.delta_wm(), "delta_wm")?;
    let pole = nonzero(p.delta_qw() - p.alpha, "delta_qw - alpha")?;
    let mut validity = p.validity();
    validity.large_alpha = false;
    Ok(FwmAmplitude {
        value: -2.0 * p.ep * p.g_qw * p.g_qm * p.alpha / (dqm * dwm * pole),
        regime: Regime::Transmon,
        validity,
    })
}

/// −2α·(E_p/Δ_wm)·(g_qw/Δ_qw)·(g_qm/Δ_qm), the leading term for α ≪ |Δ_qw|.
pub fn fwm_amplitude_small_alpha(p: &FwmProblem) -> Result<FwmAmplitude> {
    let dqm = nonzero(p.delta_qm(), "delta_qm")?;
    let dwm = nonzero(p.delta_wm(), "delta_wm")?;
    let dqw = nonzero(p.delta_qw(), "delta_qw")?;
    Ok(FwmAmplitude {
        value: -2.0 * p.alpha * (p.ep / dwm) * (p.g_qw / dqw) * (p.g_qm / dqm),
        regime: Regime::SmallAlpha,
        validity: p.validity(),
    })
}

/// Product Fock space |n_q, n_w, n_m⟩ with per-mode cutoffs.
#[derive(Debug, Clone, Copy)]
struct Fock {
    nq: usize,
    nw: usize,
    nm: usize,
}

impl Fock {
    fn dim(&self) -> usize {
        self.nq * self.nw * self.nm
    }
    fn index(&self, q: usize, w: usize, m: usize) -> usize {
        (q * self.nw + w) * self.nm + m
    }
    fn states(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.nq).flat_map(move |q| (0..self.nw).flat_map(move |w| (0..self.nm).map(move |m| (q, w, m))))
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// ⟨1,1,0|_n E_p(q + q†)|0,0,1⟩_n.
    pub overlap: f64,
    /// Coefficient of |2,0,0⟩ in |1,1,0⟩_n.
    pub coeff_200: f64,
    /// |⟨bare|dressed⟩| of the two assigned states.
    pub assignment: (f64, f64),
}

/// Minimum |⟨bare|dressed⟩| for a dressed state to be labelled.
pub const ASSIGN_MIN_OVERLAP: f64 = 0.8;

/// Exact diagonalization of the RWA Hamiltonian on a truncated Fock space.
pub fn fwm_oracle_exact(p: &FwmProblem, cutoffs: (usize, usize, usize)) -> Result<OracleResult> {
    let (nq, nw, nm) = cutoffs;
    if nq < 3 || nw < 3 || nm < 3 {
        return Err(Error::Domain("oracle cutoffs must be at least (3, 3, 3)".into()));
    }
    let f = Fock { nq, nw, nm };
    let n = f.dim();
    let mut h = DMatrix::<f64>::zeros(n, n);
    let (dq, dw, dm) = (p.delta_q(), p.delta_w(), p.delta_m());
    for (q, w, m) in f.states() {
        let i = f.index(q, w, m);
        let qf = q as f64;
        h[(i, i)] = -dq * qf - dw * w as f64 - dm * m as f64 - 0.5 * p.alpha * qf * (qf - 1.0);
        // q†w and q†m raise the transmon
        if q + 1 < nq {
            if w >= 1 {
                let j = f.index(q + 1, w - 1, m);
                let v = p.g_qw * ((q + 1) as f64 * w as f64).sqrt();
                h[(j, i)] += v;
                h[(i, j)] += v;
            }
            if m >= 1 {
                let j = f.index(q + 1, w, m - 1);
                let v = p.g_qm * ((q + 1) as f64 * m as f64).sqrt();
                h[(j, i)] += v;
                h[(i, j)] += v;
            }
        }
    }
    let eig = h.symmetric_eigen();
    let pick = |bare: usize| -> Result<(DVector<f64>, f64)> {
        let mut best = (0usize, -1.0f64);
        for c in 0..n {
            let o = eig.eigenvectors[(bare, c)].abs();
            if o > best.1 {
                best = (c, o);
            }
        }
        // an equal superposition of two bare states sits at 1/√2
        if best.1 < ASSIGN_MIN_OVERLAP {
            return Err(Error::Assignment(format!(
                "largest bare overlap {:.3} < {ASSIGN_MIN_OVERLAP}; dressed states are strongly hybridized",
                best.1
            )));
        }
        let v = eig.eigenvectors.column(best.0).into_owned();
        Ok((fix_phase(v), best.1))
    };
    let (a, oa) = pick(f.index(0, 0, 1))?;
    let (b, ob) = pick(f.index(1, 1, 0))?;
    // drive operator E_p(q + q†)
    let mut qa = DVector::<f64>::zeros(n);
    for (q, w, m) in f.states() {
        let i = f.index(q, w, m);
        if q + 1 < nq {
            qa[f.index(q + 1, w, m)] += ((q + 1) as f64).sqrt() * a[i];
        }
        if q >= 1 {
            qa[f.index(q - 1, w, m)] += (q as f64).sqrt() * a[i];
        }
    }
    Ok(OracleResult { overlap: p.ep * b.dot(&qa), coeff_200: b[f.index(2, 0, 0)], assignment: (oa, ob) })
}

/// Global sign: largest-modulus component positive (first one on ties).
fn fix_phase(v: DVector<f64>) -> DVector<f64> {
    let mut k = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[k].abs() * (1.0 + 1e-12) {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(alpha: f64, g: f64) -> FwmProblem {
        let (wq, wm, ww) = (0.0, 1.0, 0.5);
        FwmProblem {
            omega_q: wq,
            omega_m: wm,
            omega_w: ww,
            omega_p: resonant_pump(wq, wm, ww),
            g_qm: g,
            g_qw: g,
            alpha,
            ep: 1e-3,
        }
    }

    #[test]
    fn detuning_identities() {
        let p = problem(0.2, 0.01);
        assert_eq!(p.delta_qm(), p.delta_m() - p.delta_q());
        assert_eq!(p.delta_qw(), p.delta_w() - p.delta_q());
        assert_eq!(p.mismatch(), 0.0);
    }

    #[test]
    fn tls_direct_value() {
        // E_p = 1, g = 0.01, Δ_qm = 1, Δ_wm = 0.5
        let p = FwmProblem {
            omega_q: 1.0,
            omega_m: 0.0,
            omega_w: 0.5,
            omega_p: 0.0,
            g_qm: 0.01,
            g_qw: 0.01,
            alpha: 0.1,
            ep: 1.0,
        };
        assert!((fwm_amplitude_tls(&p).unwrap().value - 4e-4).abs() < 1e-18);
    }

    #[test]
    fn resonant_denominators_are_errors() {
        let mut p = problem(0.2, 0.01);
        p.omega_w = p.omega_m;
        assert!(matches!(fwm_amplitude_tls(&p), Err(Error::ResonantDenominator { .. })));
        let mut p = problem(0.2, 0.01);
        p.alpha = p.delta_qw();
        assert!(matches!(fwm_amplitude_transmon(&p), Err(Error::ResonantDenominator { .. })));
    }

    #[test]
    fn oracle_decoupled_is_zero() {
        let r = fwm_oracle_exact(&problem(0.2, 0.0), (3, 3, 3)).unwrap();
        assert_eq!(r.overlap, 0.0);
    }
}
