//! Tight-binding reduction of the multimode lattice: per-harmonic models
//! j·ω̃_0 + j·t·σ^(j) with hopping t = C_c ω̃_0 / (2 C̃_0), and comparison
//! against the full circuit.

use nalgebra::{Complex, DMatrix};

use crate::bands::{run_ordered, Parallelism};
use crate::bloch::BlochSolver;
use crate::device::{Boundary, DeviceSpec, End};
use crate::error::{Error, Result};

/// FW on-site frequency used for the hopping sweep (2π × 10 GHz).
pub const FW_ONSITE_DEFAULT: f64 = 2.0 * std::f64::consts::PI * 10e9;

#[derive(Debug, Clone, PartialEq)]
pub struct TbBond {
    pub a: End,
    pub b: End,
    pub cell_offset: usize,
}

#[derive(Debug, Clone)]
pub struct TbModel {
    /// Renormalized fundamental ω̃_0.
    pub omega_tilde: f64,
    pub t: f64,
    pub n_sites: usize,
    pub n_cells: usize,
    pub boundary: Boundary,
    pub bonds: Vec<TbBond>,
}

/// t = C_c / (2 (C_0 + 4C_c + C_c')^{3/2} L_0^{1/2}) and ω̃_0 = 1/√(C̃_0 L_0).
pub fn hopping_from_circuit(c0: f64, cc: f64, cc_prime: f64, l0: f64) -> Result<(f64, f64)> {
    for (v, n) in [(c0, "c0"), (l0, "l0")] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{n} must be positive, got {v}")));
        }
    }
    for (v, n) in [(cc, "cc"), (cc_prime, "cc_prime")] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{n} must be non-negative, got {v}")));
        }
    }
    let ct = c0 + 4.0 * cc + cc_prime;
    let t = cc / (2.0 * ct.powf(1.5) * l0.sqrt());
    Ok((t, 1.0 / (ct * l0).sqrt()))
}

/// Element values (C_0, C_c) giving hopping `t_target` and renormalized
/// fundamental `omega_tilde`, with C_c' = ratio·C_c and `degree` couplers
/// per resonator.
pub fn invert_hopping_general(
    t_target: f64,
    l0: f64,
    cc_prime_ratio: f64,
    omega_tilde: f64,
    degree: f64,
) -> Result<(f64, f64)> {
    if !(t_target >= 0.0) || !(l0 > 0.0) || !(cc_prime_ratio >= 0.0) || !(omega_tilde > 0.0) {
        return Err(Error::Domain("invert_hopping needs t >= 0, L0 > 0, ratio >= 0, omega > 0".into()));
    }
    // C̃_0 is fixed by the on-site frequency; t = C_c ω̃_0/(2C̃_0) is linear in C_c.
    let ct = 1.0 / (l0 * omega_tilde * omega_tilde);
    let cc = 2.0 * ct * t_target / omega_tilde;
    let c0 = ct - (degree + cc_prime_ratio) * cc;
    if !(c0 > 0.0) {
        return Err(Error::NoSolution(format!(
            "t = {t_target:e} rad/s needs C_0 = {c0:e} F <= 0 (max t = {:e} rad/s)",
            omega_tilde / (2.0 * (degree + cc_prime_ratio))
        )));
    }
    Ok((c0, cc))
}

/// Inversion for the default FW on-site 2π×10 GHz (ω̃_0 = 2π×5 GHz), degree 4.
/// Returns (C_c, C_0).
pub fn invert_hopping(t_target: f64, l0: f64, cc_prime_ratio: f64) -> Result<(f64, f64)> {
    let (c0, cc) = invert_hopping_general(t_target, l0, cc_prime_ratio, FW_ONSITE_DEFAULT / 2.0, 4.0)?;
    Ok((cc, c0))
}

/// Retune a device so that its TB parameters are (ω̃_0, t) with
/// C_c' = ratio·C_c. Requires a uniform coupler degree.
pub fn retune_device(device: &DeviceSpec, t: f64, omega_tilde: f64, cc_prime_ratio: f64) -> Result<DeviceSpec> {
    let deg = device.site_degrees();
    if deg.iter().any(|&d| d != deg[0]) {
        return Err(Error::Domain("retuning needs every resonator to have the same coupler degree".into()));
    }
    let l0 = device.resonators[0].l0();
    if device.resonators.iter().any(|r| r.l0_nh != device.resonators[0].l0_nh) {
        return Err(Error::Domain("retuning needs a uniform L_0".into()));
    }
    let ratio = if loads_everywhere(device) { cc_prime_ratio } else { 0.0 };
    let (c0, cc) = invert_hopping_general(t, l0, ratio, omega_tilde, deg[0] as f64)?;
    Ok(device.with_uniform_elements(c0 / 1e-15, cc / 1e-15, cc_prime_ratio * cc / 1e-15))
}

fn loads_everywhere(device: &DeviceSpec) -> bool {
    device.transmon_loading_everywhere
}

impl TbModel {
    /// TB parameters of a device with uniform renormalized capacitance,
    /// inductance and coupling.
    pub fn from_device(device: &DeviceSpec) -> Result<TbModel> {
        let n = device.n_sites();
        // Diagonal of the j = 1 block: C_0 + Σ incident C_c + C_c'.
        let mut incident = vec![0.0; n];
        for c in device.couplers.iter().chain(device.inter_cell_couplers.iter()) {
            incident[c.a.site] += c.cc();
            incident[c.b.site] += c.cc();
        }
        let c_tilde = device.resonators[0].c0() + incident[0] + device.loading(0, 0).cc_prime;
        for cell in 0..device.n_cells {
            for i in 0..n {
                let c = device.resonators[i].c0() + incident[i] + device.loading(cell, i).cc_prime;
                if ((c - c_tilde) / c_tilde).abs() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "renormalized capacitance differs between sites (cell {cell} site {i}: {c:e} F vs {c_tilde:e} F)"
                    )));
                }
            }
        }
        let l0 = device.resonators[0].l0();
        if device.resonators.iter().any(|r| r.l0_nh != device.resonators[0].l0_nh) {
            return Err(Error::Domain("tight-binding model needs a uniform L_0".into()));
        }
        let all: Vec<_> = device.couplers.iter().chain(device.inter_cell_couplers.iter()).collect();
        let cc = all.first().map(|c| c.cc()).unwrap_or(0.0);
        if all.iter().any(|c| c.cc_ff != all[0].cc_ff) {
            return Err(Error::Domain("tight-binding model needs a uniform C_c".into()));
        }
        let omega_tilde = 1.0 / (c_tilde * l0).sqrt();
        let t = cc * omega_tilde / (2.0 * c_tilde);
        let bonds = all.iter().map(|c| TbBond { a: c.a, b: c.b, cell_offset: c.cell_offset }).collect();
        Ok(TbModel { omega_tilde, t, n_sites: n, n_cells: device.n_cells, boundary: device.boundary, bonds })
    }

    /// σ^(j) on the full finite lattice (cell-major site order).
    pub fn sigma(&self, j: usize) -> DMatrix<f64> {
        let s = self.n_sites;
        let n = s * self.n_cells;
        let mut m = DMatrix::zeros(n, n);
        for cell in 0..self.n_cells {
            for b in &self.bonds {
                let t = cell + b.cell_offset;
                let target = match self.boundary {
                    Boundary::Open if t >= self.n_cells => continue,
                    Boundary::Open => t,
                    Boundary::Periodic => t % self.n_cells,
                };
                let v = b.a.parity.sign(j) * b.b.parity.sign(j);
                let (p, q) = (cell * s + b.a.site, target * s + b.b.site);
                m[(p, q)] += v;
                m[(q, p)] += v;
            }
        }
        m
    }

    /// Bloch σ^(j)(k), same phase convention as the circuit symbol.
    pub fn sigma_bloch(&self, j: usize, k: f64) -> DMatrix<Complex<f64>> {
        let s = self.n_sites;
        let mut m = DMatrix::<Complex<f64>>::zeros(s, s);
        for b in &self.bonds {
            let v = b.a.parity.sign(j) * b.b.parity.sign(j);
            let ph = if b.cell_offset == 0 {
                Complex::new(1.0, 0.0)
            } else {
                Complex::from_polar(1.0, k * b.cell_offset as f64)
            };
            m[(b.a.site, b.b.site)] += ph * v;
            m[(b.b.site, b.a.site)] += ph.conj() * v;
        }
        m
    }

    /// Eigenvalues of j·ω̃_0 + j·t·σ^(j) on the finite lattice, ascending.
    pub fn spectrum(&self, j: usize) -> Vec<f64> {
        let jf = j as f64;
        shifted_eigs(self.sigma(j).symmetric_eigenvalues().iter().copied(), jf * self.omega_tilde, jf * self.t)
    }

    pub fn bloch_spectrum(&self, j: usize, k: f64) -> Vec<f64> {
        let jf = j as f64;
        let e = self.sigma_bloch(j, k).symmetric_eigenvalues();
        shifted_eigs(e.iter().copied(), jf * self.omega_tilde, jf * self.t)
    }

    /// Spectral span (max − min) of σ^(j) over a k grid.
    pub fn sigma_span(&self, j: usize, k_grid: &[f64]) -> f64 {
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for &k in k_grid {
            for v in self.sigma_bloch(j, k).symmetric_eigenvalues().iter() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        hi - lo
    }
}

fn shifted_eigs(e: impl Iterator<Item = f64>, onsite: f64, hop: f64) -> Vec<f64> {
    let mut v: Vec<f64> = e.map(|x| onsite + hop * x).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of `onsite·I + hop·sigma` for an arbitrary symmetric σ.
pub fn tb_spectrum(sigma: &DMatrix<f64>, onsite: f64, hop: f64) -> Vec<f64> {
    shifted_eigs(sigma.clone().symmetric_eigenvalues().iter().copied(), onsite, hop)
}

#[derive(Debug, Clone)]
pub struct BandDeviation {
    pub band: usize,
    pub tb_min: f64,
    pub tb_max: f64,
    pub full_min: f64,
    pub full_max: f64,
    pub max_abs_dev: f64,
    pub max_rel_dev: f64,
}

#[derive(Debug, Clone)]
pub struct HarmonicDeviation {
    pub j: usize,
    pub bands: Vec<BandDeviation>,
    pub max_abs_dev: f64,
    pub max_rel_dev: f64,
    /// Full-circuit family width / TB family width.
    pub width_ratio: f64,
    pub full_width: f64,
    /// Family width divided by the spectral span of σ^(j).
    pub fitted_hopping: f64,
}

#[derive(Debug, Clone)]
pub struct TbDeviationReport {
    pub t: f64,
    pub omega_tilde: f64,
    pub harmonics: Vec<HarmonicDeviation>,
    /// 5·(t/ω̃_0)², the second-order allowance.
    pub second_order_bound: f64,
}

impl TbDeviationReport {
    pub fn max_rel_dev(&self) -> f64 {
        self.harmonics.iter().map(|h| h.max_rel_dev).fold(0.0, f64::max)
    }
}

/// Compare full-circuit Bloch bands with the TB model on a k grid for the
/// given harmonic families.
pub fn tb_deviation(
    device: &DeviceSpec,
    k_grid: &[f64],
    harmonics: &[usize],
    par: Parallelism,
) -> Result<TbDeviationReport> {
    let model = TbModel::from_device(device)?;
    let solver = BlochSolver::new(device)?;
    let s = device.n_sites();
    let mut out = Vec::new();
    for &j in harmonics {
        if j == 0 || device.resonators.iter().any(|r| r.mode_cutoff < j) {
            return Err(Error::Index(format!("harmonic {j} not available at the device cutoff")));
        }
        let rows: Vec<(Vec<f64>, Vec<f64>)> = run_ordered(par, k_grid, |&k| {
            let full = solver.levels(k, s * (j - 1), s * j)?;
            Ok((full, model.bloch_spectrum(j, k)))
        })?;
        let mut bands = Vec::with_capacity(s);
        let (mut fmin, mut fmax, mut tmin, mut tmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for b in 0..s {
            let mut bd = BandDeviation {
                band: b,
                tb_min: f64::MAX,
                tb_max: f64::MIN,
                full_min: f64::MAX,
                full_max: f64::MIN,
                max_abs_dev: 0.0,
                max_rel_dev: 0.0,
            };
            for (full, tb) in &rows {
                let d = (full[b] - tb[b]).abs();
                bd.max_abs_dev = bd.max_abs_dev.max(d);
                bd.max_rel_dev = bd.max_rel_dev.max(d / tb[b]);
                bd.tb_min = bd.tb_min.min(tb[b]);
                bd.tb_max = bd.tb_max.max(tb[b]);
                bd.full_min = bd.full_min.min(full[b]);
                bd.full_max = bd.full_max.max(full[b]);
            }
            fmin = fmin.min(bd.full_min);
            fmax = fmax.max(bd.full_max);
            tmin = tmin.min(bd.tb_min);
            tmax = tmax.max(bd.tb_max);
            bands.push(bd);
        }
        let span = model.sigma_span(j, k_grid);
        out.push(HarmonicDeviation {
            j,
            max_abs_dev: bands.iter().map(|b| b.max_abs_dev).fold(0.0, f64::max),
            max_rel_dev: bands.iter().map(|b| b.max_rel_dev).fold(0.0, f64::max),
            width_ratio: if tmax > tmin { (fmax - fmin) / (tmax - tmin) } else { f64::NAN },
            full_width: fmax - fmin,
            fitted_hopping: if span > 0.0 { (fmax - fmin) / span } else { f64::NAN },
            bands,
        });
    }
    let r = model.t / model.omega_tilde;
    Ok(TbDeviationReport {
        t: model.t,
        omega_tilde: model.omega_tilde,
        harmonics: out,
        second_order_bound: 5.0 * r * r,
    })
}
