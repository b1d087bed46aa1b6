//! Bloch spectra of periodic lattices.
//!
//! Two routes: a dense one (Hermitian eigensolve of K(k) = L^{1/2}C(k)L^{1/2})
//! and a fast one exploiting C(k) = D + U·X(k)·U†, where D is the diagonal
//! bare capacitance and X(k) a small matrix on the coupler ends (two per
//! resonator). For λ = ω² Sylvester's law of inertia gives the number of
//! eigenvalues below λ as
//!
//!   N(λ) = neg(L⁻¹ − λD) + neg(I − λ·Y†(U†(L⁻¹ − λD)⁻¹U)Y),   X = YY†,
//!
//! where the second matrix is only (2S)×(2S). Eigenvalues are isolated by
//! bisection on N and polished by Brent's method on the crossing eigenvalue.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};

use crate::circuit::{bloch_blocks, reflection_rows, BlochBlocks};
use crate::device::{DeviceSpec, Loading, Paddle, Parity};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

#[derive(Debug, Clone)]
struct Site {
    /// L_ref/L_0 (dimensionless inverse inductance scale).
    inv_l: f64,
    /// C_0/C_ref.
    c0: f64,
    m: usize,
}

#[derive(Debug, Clone)]
struct EndTerm {
    a: usize,
    b: usize,
    c: f64,
    /// b sits in the next cell.
    inter: bool,
}

/// Fast Bloch solver for a periodic device with nearest-cell couplers.
#[derive(Debug, Clone)]
pub struct BlochSolver {
    sites: Vec<Site>,
    terms: Vec<EndTerm>,
    /// (end, C') loading terms.
    loads: Vec<(usize, f64)>,
    /// λ̂ = λ·scale.
    scale: f64,
    reflection: Option<Vec<(usize, f64)>>,
    cutoffs: Vec<usize>,
}

fn end_index(site: usize, p: Parity) -> usize {
    2 * site + if p == Parity::Plus { 0 } else { 1 }
}

impl BlochSolver {
    pub fn new(device: &DeviceSpec) -> Result<Self> {
        // validates periodicity / nearest-cell structure
        let _ = bloch_blocks_shape_check(device)?;
        let loading = device.cell_loading()?;
        let l_ref = device.resonators[0].l0();
        let c_ref = device.resonators[0].c0();
        let sites = device
            .resonators
            .iter()
            .map(|r| Site { inv_l: l_ref / r.l0(), c0: r.c0() / c_ref, m: r.mode_cutoff })
            .collect();
        let mut terms = Vec::new();
        for c in &device.couplers {
            terms.push(EndTerm {
                a: end_index(c.a.site, c.a.parity),
                b: end_index(c.b.site, c.b.parity),
                c: c.cc() / c_ref,
                inter: false,
            });
        }
        for c in &device.inter_cell_couplers {
            terms.push(EndTerm {
                a: end_index(c.a.site, c.a.parity),
                b: end_index(c.b.site, c.b.parity),
                c: c.cc() / c_ref,
                inter: true,
            });
        }
        let mut loads = Vec::new();
        for (s, l) in loading.iter().enumerate() {
            let Loading { paddle, cc_prime } = *l;
            let c = cc_prime / c_ref;
            match paddle {
                Paddle::None => {}
                Paddle::Plus => loads.push((end_index(s, Parity::Plus), c)),
                Paddle::Minus => loads.push((end_index(s, Parity::Minus), c)),
                Paddle::Split => {
                    loads.push((end_index(s, Parity::Plus), 0.5 * c));
                    loads.push((end_index(s, Parity::Minus), 0.5 * c));
                }
            }
        }
        let map = device.unit_cell_map();
        Ok(BlochSolver {
            sites,
            terms,
            loads,
            scale: l_ref * c_ref,
            reflection: reflection_rows(device, &map),
            cutoffs: device.cutoffs(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// X(k) on the 2S coupler ends (units of C_ref). Convention matches
    /// C(k) = onsite + hop·e^{ik} + hopᵀ·e^{−ik}.
    pub fn end_matrix(&self, k: f64) -> DMatrix<C64> {
        let n = 2 * self.sites.len();
        let mut x = DMatrix::<C64>::zeros(n, n);
        let (s, c) = k.sin_cos();
        // w = e_a − e^{−ik} e_b for inter-cell terms
        for t in &self.terms {
            let phase = if t.inter { C64::new(c, -s) } else { C64::new(1.0, 0.0) };
            let wa = C64::new(1.0, 0.0);
            let wb = -phase;
            x[(t.a, t.a)] += wa * wa.conj() * t.c;
            x[(t.b, t.b)] += wb * wb.conj() * t.c;
            x[(t.a, t.b)] += wa * wb.conj() * t.c;
            x[(t.b, t.a)] += wb * wa.conj() * t.c;
        }
        for &(e, cp) in &self.loads {
            x[(e, e)] += C64::new(cp, 0.0);
        }
        x
    }

    /// Factor X(k) = Y·Y† (Y is 2S × rank).
    fn factor(&self, k: f64) -> DMatrix<C64> {
        let x = self.end_matrix(k);
        let e = x.symmetric_eigen();
        let max = e.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let keep: Vec<usize> = (0..e.eigenvalues.len()).filter(|&i| e.eigenvalues[i] > 1e-13 * max).collect();
        let n = 2 * self.sites.len();
        DMatrix::from_fn(n, keep.len(), |r, c| {
            let i = keep[c];
            e.eigenvectors[(r, i)] * e.eigenvalues[i].sqrt()
        })
    }

    fn pole_count(&self, lam: f64) -> usize {
        self.sites
            .iter()
            .map(|s| {
                // j² inv_l < lam c0  ⇔  j < sqrt(lam c0 / inv_l)
                let x = (lam * s.c0 / s.inv_l).max(0.0).sqrt();
                let mut cnt = x.ceil() as usize;
                if cnt > 0 {
                    cnt -= 1;
                }
                // guard exact squares
                while cnt < s.m && ((cnt + 1) * (cnt + 1)) as f64 * s.inv_l < lam * s.c0 {
                    cnt += 1;
                }
                while cnt > 0 && (cnt * cnt) as f64 * s.inv_l >= lam * s.c0 {
                    cnt -= 1;
                }
                cnt.min(s.m)
            })
            .sum()
    }

    fn has_pole_in(&self, a: f64, b: f64) -> bool {
        self.pole_count(a) != self.pole_count(b)
            || self.sites.iter().any(|s| {
                (1..=s.m).any(|j| {
                    let p = (j * j) as f64 * s.inv_l / s.c0;
                    p >= a && p <= b
                })
            })
    }

    /// I − λ Y†GY with G = U†(L⁻¹ − λD)⁻¹U.
    fn secular(&self, y: &DMatrix<C64>, lam: f64) -> DMatrix<C64> {
        let n = y.nrows();
        let r = y.ncols();
        // G is block diagonal: [[S, A], [A, S]] per site.
        let mut gy = DMatrix::<C64>::zeros(n, r);
        for (i, s) in self.sites.iter().enumerate() {
            let mut sum = 0.0;
            let mut alt = 0.0;
            for j in 1..=s.m {
                let inv = 1.0 / ((j * j) as f64 * s.inv_l - lam * s.c0);
                sum += inv;
                if j % 2 == 0 {
                    alt += inv;
                } else {
                    alt -= inv;
                }
            }
            let (p, m) = (2 * i, 2 * i + 1);
            for c in 0..r {
                let yp = y[(p, c)];
                let ym = y[(m, c)];
                gy[(p, c)] = yp * sum + ym * alt;
                gy[(m, c)] = yp * alt + ym * sum;
            }
        }
        let mut h = y.adjoint() * gy;
        h *= C64::new(-lam, 0.0);
        for i in 0..r {
            h[(i, i)] += C64::new(1.0, 0.0);
        }
        // exact Hermitian symmetrization
        for i in 0..r {
            h[(i, i)].im = 0.0;
            for j in i + 1..r {
                let v = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        h
    }

    fn sorted_eigs(h: DMatrix<C64>) -> Vec<f64> {
        let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Number of eigenvalues (in λ̂ = ω²·scale) strictly below `lam`.
    fn count(&self, y: &DMatrix<C64>, mut lam: f64) -> usize {
        // Levels sitting exactly on a bare pole (e.g. modes with no charge
        // on any coupler) are counted from below.
        if self.sites.iter().any(|s| (1..=s.m).any(|j| (j * j) as f64 * s.inv_l == lam * s.c0)) {
            lam = f64::from_bits(lam.to_bits() - 1);
        }
        let poles = self.pole_count(lam);
        if y.ncols() == 0 {
            return poles;
        }
        let mu = Self::sorted_eigs(self.secular(y, lam));
        poles + mu.iter().filter(|&&m| m < 0.0).count()
    }

    /// Scaled bare poles j²·inv_l/c0 sorted ascending (with multiplicity).
    fn poles(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .sites
            .iter()
            .flat_map(|s| (1..=s.m).map(move |j| (j * j) as f64 * s.inv_l / s.c0))
            .collect();
        p.sort_by(f64::total_cmp);
        p
    }

    /// Eigenfrequencies with sorted indices `lo..hi` at momentum k.
    pub fn levels(&self, k: f64, lo: usize, hi: usize) -> Result<Vec<f64>> {
        let total: usize = self.sites.iter().map(|s| s.m).sum();
        if hi > total || lo >= hi {
            return Err(Error::Index(format!("band indices {lo}..{hi} outside 0..{total}")));
        }
        let y = self.factor(k);
        let poles = self.poles();
        // Courant: C ≥ D, so λ_i ≤ i-th bare pole.
        let mut b = poles[hi - 1] * (1.0 + 1e-9);
        let mut nb = self.count(&y, b);
        while nb < hi {
            b *= 1.0 + 1e-6;
            nb = self.count(&y, b);
        }
        // rank-r interlacing: λ_i ≥ i−r-th pole
        let r = y.ncols();
        let (a, na) = if lo >= r + 1 {
            let a = poles[lo - r - 1] * (1.0 - 1e-9);
            (a, self.count(&y, a))
        } else {
            (0.0, 0)
        };
        let mut out = vec![f64::NAN; hi - lo];
        self.isolate(&y, a, na, b, nb, lo, hi, &mut out);
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::Convergence(format!("bisection failed to resolve levels {lo}..{hi} at k={k}")));
        }
        Ok(out.into_iter().map(|l| (l / self.scale).sqrt()).collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn isolate(&self, y: &DMatrix<C64>, a: f64, na: usize, b: f64, nb: usize, lo: usize, hi: usize, out: &mut [f64]) {
        let mut stack = vec![(a, na, b, nb)];
        while let Some((a, na, b, nb)) = stack.pop() {
            if nb <= lo || na >= hi || nb == na {
                continue;
            }
            if b - a <= 4.0 * f64::EPSILON * b {
                let mid = 0.5 * (a + b);
                for i in na.max(lo)..nb.min(hi) {
                    out[i - lo] = mid;
                }
                continue;
            }
            if !self.has_pole_in(a, b) && y.ncols() > 0 {
                // polish the lowest crossing in (a, b]
                let p = self.pole_count(a);
                let m = na - p;
                if let Some(root) = self.brent(y, a, b, m) {
                    let hi_side = root * (1.0 + 4.0 * f64::EPSILON);
                    let n_hi = self.count(y, hi_side);
                    let n_lo = self.count(y, root * (1.0 - 4.0 * f64::EPSILON));
                    if n_lo == na && n_hi > na {
                        for i in na.max(lo)..n_hi.min(hi) {
                            out[i - lo] = root;
                        }
                        if n_hi < nb {
                            stack.push((hi_side, n_hi, b, nb));
                        }
                        continue;
                    }
                }
            }
            let mid = 0.5 * (a + b);
            let nm = self.count(y, mid);
            stack.push((mid, nm, b, nb));
            stack.push((a, na, mid, nm));
        }
    }

    /// Root of μ_m(λ) (m-th smallest eigenvalue of the secular matrix) in
    /// (a, b), where μ_m(a) ≥ 0 > μ_m(b). Brent's method.
    fn brent(&self, y: &DMatrix<C64>, x1: f64, x2: f64, m: usize) -> Option<f64> {
        let f = |l: f64| Self::sorted_eigs(self.secular(y, l)).get(m).copied();
        let (mut a, mut b, mut c) = (x1, x2, x2);
        let (mut fa, mut fb) = (f(a)?, f(b)?);
        if fa < 0.0 || fb >= 0.0 {
            return None;
        }
        let mut fc = fb;
        let (mut d, mut e) = (b - a, b - a);
        for _ in 0..200 {
            if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
                c = a;
                fc = fa;
                d = b - a;
                e = d;
            }
            if fc.abs() < fb.abs() {
                a = b;
                b = c;
                c = a;
                fa = fb;
                fb = fc;
                fc = fa;
            }
            let tol1 = 2.0 * f64::EPSILON * b.abs();
            let xm = 0.5 * (c - b);
            if xm.abs() <= tol1 || fb == 0.0 {
                return Some(b);
            }
            if e.abs() >= tol1 && fa.abs() > fb.abs() {
                let s = fb / fa;
                let (mut p, mut q);
                if a == c {
                    p = 2.0 * xm * s;
                    q = 1.0 - s;
                } else {
                    let qq = fa / fc;
                    let r = fb / fc;
                    p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                    q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
                }
                if p > 0.0 {
                    q = -q;
                }
                p = p.abs();
                let min1 = 3.0 * xm * q - (tol1 * q).abs();
                let min2 = (e * q).abs();
                if 2.0 * p < min1.min(min2) {
                    e = d;
                    d = p / q;
                } else {
                    d = xm;
                    e = d;
                }
            } else {
                d = xm;
                e = d;
            }
            a = b;
            fa = fb;
            b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
            fb = f(b)?;
        }
        Some(b)
    }

    /// Levels with eigenvectors on the unit-cell rows (Φ coordinates),
    /// clusters canonicalized by reflection parity. Returns (ω, vector,
    /// parity label) for indices lo..hi.
    pub fn levels_with_vectors(&self, k: f64, lo: usize, hi: usize) -> Result<Vec<(f64, DVector<C64>, i8)>> {
        let omegas = self.levels(k, lo, hi)?;
        let y = self.factor(k);
        let mut out = Vec::with_capacity(omegas.len());
        let mut i = 0;
        while i < omegas.len() {
            let mut j = i + 1;
            while j < omegas.len() && (omegas[j] - omegas[j - 1]).abs() < 1e-9 * omegas[j] {
                j += 1;
            }
            let mult = j - i;
            let w = 0.5 * (omegas[i] + omegas[j - 1]);
            let lam = w * w * self.scale;
            let h = self.secular(&y, lam);
            let e = h.symmetric_eigen();
            let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
            idx.sort_by(|&p, &q| e.eigenvalues[p].abs().total_cmp(&e.eigenvalues[q].abs()));
            let mut vecs = Vec::new();
            for &c in idx.iter().take(mult) {
                let z = e.eigenvectors.column(c);
                vecs.push(self.lift(&(&y * z), lam));
            }
            let canon = canonicalize_complex(vecs, self.reflection.as_deref());
            for (n, (v, p)) in canon.into_iter().enumerate() {
                out.push((omegas[i + n], v, p));
            }
            i = j;
        }
        Ok(out)
    }

    /// φ = (L⁻¹ − λD)⁻¹ U (Y z), normalized.
    fn lift(&self, yz: &DVector<C64>, lam: f64) -> DVector<C64> {
        let dim: usize = self.cutoffs.iter().sum();
        let mut v = DVector::<C64>::zeros(dim);
        let mut row = 0;
        for (i, s) in self.sites.iter().enumerate() {
            let (p, m) = (yz[2 * i], yz[2 * i + 1]);
            for j in 1..=s.m {
                let inv = 1.0 / ((j * j) as f64 * s.inv_l - lam * s.c0);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                v[row] = (p + m * sign) * inv;
                row += 1;
            }
        }
        let n = v.norm();
        v / C64::new(n, 0.0)
    }
}

fn bloch_blocks_shape_check(device: &DeviceSpec) -> Result<()> {
    if device.boundary != crate::device::Boundary::Periodic {
        return Err(Error::Topology("Bloch analysis requires a periodic lattice".into()));
    }
    if let Some(c) = device.inter_cell_couplers.iter().find(|c| c.cell_offset != 1) {
        return Err(Error::Topology(format!(
            "inter-cell coupler spans {} cells; only nearest-cell couplers are allowed",
            c.cell_offset
        )));
    }
    Ok(())
}

fn apply_reflection_c(r: &[(usize, f64)], v: &DVector<C64>) -> DVector<C64> {
    let mut out = DVector::zeros(v.len());
    for (i, &(t, s)) in r.iter().enumerate() {
        out[t] = v[i] * s;
    }
    out
}

fn orthonormalize_c(vs: &[DVector<C64>]) -> Vec<DVector<C64>> {
    let mut out: Vec<DVector<C64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = u.dotc(&w);
                w -= u * c;
            }
        }
        let n = w.norm();
        if n > 1e-12 {
            out.push(w / C64::new(n, 0.0));
        }
    }
    out
}

/// Parity-resolved basis of a (complex) degenerate cluster.
fn canonicalize_complex(vs: Vec<DVector<C64>>, r: Option<&[(usize, f64)]>) -> Vec<(DVector<C64>, i8)> {
    let basis = orthonormalize_c(&vs);
    let Some(r) = r else {
        return basis.into_iter().map(|v| (v, 0)).collect();
    };
    let m = basis.len();
    let rb: Vec<DVector<C64>> = basis.iter().map(|v| apply_reflection_c(r, v)).collect();
    let q = DMatrix::from_fn(m, m, |a, b| (basis[a].dotc(&rb[b]) + rb[a].dotc(&basis[b]).conj()) * 0.5);
    let e = q.symmetric_eigen();
    let mut cols: Vec<usize> = (0..m).collect();
    // +1 sector first
    cols.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    cols.into_iter()
        .map(|c| {
            let mut v = DVector::<C64>::zeros(basis[0].len());
            for a in 0..m {
                v += &basis[a] * e.eigenvectors[(a, c)];
            }
            let x = e.eigenvalues[c];
            let label = if x > crate::modes::PARITY_THRESHOLD {
                1
            } else if x < -crate::modes::PARITY_THRESHOLD {
                -1
            } else {
                0
            };
            (v, label)
        })
        .collect()
}

/// Dense reference route: all Bloch frequencies at k from the symbol.
pub fn dense_bloch_frequencies(blocks: &BlochBlocks, k: f64) -> Result<Vec<f64>> {
    let ck = blocks.symbol(k);
    let w: Vec<f64> = blocks.ind_inv.iter().map(|&x| 1.0 / x.sqrt()).collect();
    let n = w.len();
    let kk = DMatrix::from_fn(n, n, |p, q| ck[(p, q)] * (w[p] * w[q]));
    let d = nalgebra::SymmetricEigen::try_new(kk, f64::EPSILON, 0)
        .ok_or_else(|| Error::Convergence("Hermitian eigensolver did not converge".into()))?
        .eigenvalues;
    let mut f: Vec<f64> = d.iter().map(|&x| 1.0 / x.sqrt()).collect();
    f.sort_by(f64::total_cmp);
    Ok(f)
}

/// Uniform grid of `n` momenta in [−π, π).
pub fn k_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -PI + 2.0 * PI * i as f64 / n as f64).collect()
}

/// Convenience: dense Bloch blocks for a device.
pub fn dense_blocks(device: &DeviceSpec) -> Result<BlochBlocks> {
    bloch_blocks(device)
}

