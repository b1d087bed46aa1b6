//! Steady-state saturation of a driven transmon: closed forms
//! P = A·B·E²/(1 + B·E²) and a three-level Lindblad reference.
//!
//! Drive convention: H_drive = E_p(q + q†) in the pump frame, so the g–e
//! Rabi rate is 2E_p. For a resonantly driven two-level system with decay
//! γ this gives A = 1/2 and B = 8/γ² per E_p² (B = 2/γ² per Rabi rate²).

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

type C64 = Complex<f64>;

pub fn p_sat(e: f64, a: f64, b: f64) -> f64 {
    let x = b * e * e;
    a * x / (1.0 + x)
}

/// Effective two-photon (Raman) Rabi rate √2·E_p²/(2|Δ_qp|) with Δ_qp = α/2.
pub fn raman_rate(ep: f64, alpha: f64) -> f64 {
    std::f64::consts::SQRT_2 * ep * ep / (2.0 * (0.5 * alpha).abs())
}

#[derive(Debug, Clone)]
pub struct SaturationCurve {
    pub drive: Vec<f64>,
    pub p_ee: Vec<f64>,
    pub p_ff: Vec<f64>,
    /// (A, B) of P_ee and (Ã, B̃) of P_ff (the latter in E_Raman).
    pub fit_ee: Option<(f64, f64)>,
    pub fit_ff: Option<(f64, f64)>,
}

pub fn saturation_pee(drive: &[f64], a: f64, b: f64) -> Vec<f64> {
    drive.iter().map(|&e| p_sat(e, a, b)).collect()
}

/// P_ff from the Raman rate: Ã·B̃·E_R²/(1 + B̃·E_R²).
pub fn saturation_pff(drive: &[f64], a: f64, b: f64, alpha: f64) -> Vec<f64> {
    drive.iter().map(|&e| p_sat(raman_rate(e, alpha), a, b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ladder {
    /// Pump detuning from the g–e transition, Δ_q = ω_p − ω_q.
    pub delta: f64,
    pub alpha: f64,
    pub gamma_e: f64,
    pub gamma_f: f64,
}

/// Steady state (P_ee, P_ff) of the driven, damped g–e–f ladder.
pub fn lindblad_steady_state(ep: f64, l: &Ladder) -> Result<(f64, f64)> {
    let rho = steady_state(ep, l)?;
    Ok((rho[(1, 1)].re, rho[(2, 2)].re))
}

/// Full 3×3 steady-state density matrix.
pub fn steady_state(ep: f64, l: &Ladder) -> Result<DMatrix<C64>> {
    if !(l.gamma_e > 0.0) || !(l.gamma_f > 0.0) {
        return Err(Error::Domain("decay rates must be positive".into()));
    }
    const N: usize = 3;
    let z = C64::new(0.0, 0.0);
    let mut h = DMatrix::<C64>::from_element(N, N, z);
    h[(1, 1)] = C64::new(-l.delta, 0.0);
    h[(2, 2)] = C64::new(-2.0 * l.delta - l.alpha, 0.0);
    let s2 = std::f64::consts::SQRT_2;
    for (i, j, v) in [(0, 1, ep), (1, 2, s2 * ep)] {
        h[(i, j)] = C64::new(v, 0.0);
        h[(j, i)] = C64::new(v, 0.0);
    }
    let mut c_ops = Vec::new();
    for (i, j, g) in [(0, 1, l.gamma_e), (1, 2, l.gamma_f)] {
        let mut c = DMatrix::<C64>::from_element(N, N, z);
        c[(i, j)] = C64::new(g.sqrt(), 0.0);
        c_ops.push(c);
    }
    // Row-major vectorization: vec(ρ)[a·N + b] = ρ[a, b].
    let id = DMatrix::<C64>::identity(N, N);
    let kron = |a: &DMatrix<C64>, b: &DMatrix<C64>| a.kronecker(b);
    let minus_i = C64::new(0.0, -1.0);
    // vec(Aρ) = (A ⊗ I)vec ρ, vec(ρB) = (I ⊗ Bᵀ)vec ρ
    let mut lv = (kron(&h, &id) - kron(&id, &h.transpose())) * minus_i;
    for c in &c_ops {
        let cd = c.adjoint();
        let cdc = &cd * c;
        lv += kron(c, &c.conjugate());
        lv -= kron(&cdc, &id) * C64::new(0.5, 0.0);
        lv -= kron(&id, &cdc.transpose()) * C64::new(0.5, 0.0);
    }
    let sv = lv.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let null = sv.iter().filter(|&&s| s < 1e-12 * smax).count();
    if null > 1 {
        return Err(Error::SingularLiouvillian(format!("{null}-dimensional null space")));
    }
    // replace the first row with the trace condition
    let mut a = lv;
    let mut rhs = DVector::<C64>::zeros(N * N);
    for k in 0..N * N {
        a[(0, k)] = z;
    }
    for d in 0..N {
        a[(0, d * N + d)] = C64::new(1.0, 0.0);
    }
    rhs[0] = C64::new(1.0, 0.0);
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularLiouvillian("trace-constrained system is singular".into()))?;
    let mut rho = DMatrix::<C64>::from_fn(N, N, |i, j| x[i * N + j]);
    // exact Hermitian part
    rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    Ok(rho)
}

/// Least-squares fit of P = A·B·E²/(1 + B·E²) via 1/P = 1/A + 1/(A·B·E²).
pub fn fit_saturation(drive: &[f64], p: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = drive
        .iter()
        .zip(p)
        .filter(|(e, p)| **e > 0.0 && **p > 0.0)
        .map(|(e, p)| (1.0 / (e * e), 1.0 / p))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit("need at least 3 positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("drive values must differ".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if !(intercept > 0.0) || !(slope > 0.0) {
        return Err(Error::Fit(format!("non-physical fit (1/A = {intercept:e}, 1/(AB) = {slope:e})")));
    }
    let a = 1.0 / intercept;
    Ok((a, intercept / slope))
}

/// Log-log slope of y against pump power (∝ E²) by least squares.
pub fn power_slope(drive: &[f64], y: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        drive.iter().zip(y).filter(|(e, y)| **e > 0.0 && **y > 0.0).map(|(e, y)| ((e * e).ln(), y.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::Fit("need at least 2 positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Lindblad populations over a drive sweep, with saturation fits.
pub fn lindblad_curve(drive: &[f64], l: &Ladder) -> Result<SaturationCurve> {
    let mut p_ee = Vec::with_capacity(drive.len());
    let mut p_ff = Vec::with_capacity(drive.len());
    for &e in drive {
        let (a, b) = lindblad_steady_state(e, l)?;
        p_ee.push(a);
        p_ff.push(b);
    }
    let raman: Vec<f64> = drive.iter().map(|&e| raman_rate(e, l.alpha)).collect();
    Ok(SaturationCurve {
        fit_ee: fit_saturation(drive, &p_ee).ok(),
        fit_ff: fit_saturation(&raman, &p_ff).ok(),
        drive: drive.to_vec(),
        p_ee,
        p_ff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_saturation_point() {
        let g: f64 = 2.0;
        let b = 2.0 / (g * g);
        assert!((p_sat(g / 2f64.sqrt(), 0.5, b) - 0.25).abs() < 1e-15);
        assert!((p_sat(1e9, 0.5, b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn undriven_ladder_is_in_ground_state() {
        let l = Ladder { delta: 0.0, alpha: 10.0, gamma_e: 1.0, gamma_f: 1.0 };
        let (pe, pf) = lindblad_steady_state(0.0, &l).unwrap();
        assert!(pe.abs() < 1e-14 && pf.abs() < 1e-14);
    }

    #[test]
    fn trace_and_positivity() {
        let l = Ladder { delta: -0.3, alpha: 2.0, gamma_e: 0.1, gamma_f: 0.2 };
        let rho = steady_state(0.4, &l).unwrap();
        let tr: f64 = (0..3).map(|i| rho[(i, i)].re).sum();
        assert!((tr - 1.0).abs() < 1e-12);
        assert!((0..3).all(|i| rho[(i, i)].re >= -1e-12));
    }
}
