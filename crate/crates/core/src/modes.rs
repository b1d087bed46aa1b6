//! Normal modes of the multimode lattice.
//!
//! With Φ̃ = √(L⁻¹)·Φ the Lagrangian becomes ½Φ̃̇ᵀKΦ̃̇ − ½Φ̃ᵀΦ̃ with
//! K = L^{1/2} C L^{1/2} (L the inductance diagonal L_0/j²). Diagonalizing
//! K = VᵀDV gives ω = 1/√d and the end-flux weights W = L^{1/2}Vᵀ.

use nalgebra::{DMatrix, DVector};

use crate::circuit::CircuitMatrices;
use crate::device::{IndexMap, Parity};
use crate::error::{Error, Result};

/// Relative frequency gap below which modes form a degenerate cluster.
pub const CLUSTER_TOL: f64 = 1e-9;
/// |⟨v|R|v⟩| threshold for a definite parity label.
pub const PARITY_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone)]
pub struct NormalModeSet {
    /// Ascending angular frequencies.
    pub freqs: Vec<f64>,
    /// Eigenvalues of K (d = 1/ω²).
    pub d: Vec<f64>,
    /// Rows are normal modes in Φ̃ coordinates.
    pub vecs: DMatrix<f64>,
    /// W[(row), mode] = √(L_0)/j · V[mode, row].
    pub end_weights: DMatrix<f64>,
    /// Reflection parity per mode: +1, −1, or 0 when mixed/unknown.
    pub parity: Vec<i8>,
    pub index_map: IndexMap,
}

/// K = L^{1/2} C L^{1/2} with the scaling factored symmetrically.
pub fn rescaled_matrix(mats: &CircuitMatrices) -> DMatrix<f64> {
    let w: Vec<f64> = mats.ind_inv.iter().map(|&x| 1.0 / x.sqrt()).collect();
    let n = w.len();
    DMatrix::from_fn(n, n, |p, q| mats.cap[(p, q)] * (w[p] * w[q]))
}

pub fn solve_modes(mats: &CircuitMatrices) -> Result<NormalModeSet> {
    let k = rescaled_matrix(mats);
    let n = k.nrows();
    let eig = k.clone().try_symmetric_eigen(f64::EPSILON, 0).ok_or_else(|| {
        let diag: Vec<f64> = k.diagonal().iter().copied().collect();
        let hi = diag.iter().cloned().fold(f64::MIN, f64::max);
        let lo = diag.iter().cloned().fold(f64::MAX, f64::min);
        Error::Convergence(format!("symmetric eigensolver did not converge (diagonal spread {:.3e})", hi / lo))
    })?;
    if let Some((i, &d)) = eig.eigenvalues.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(Error::Convergence(format!("non-positive eigenvalue d[{i}] = {d:e}")));
    }
    // Ascending frequency is descending d.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut d: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut cols: Vec<DVector<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let freqs_raw: Vec<f64> = d.iter().map(|&x| 1.0 / x.sqrt()).collect();
    let mut parity = vec![0i8; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n {
            let mean = 0.5 * (freqs_raw[end] + freqs_raw[end - 1]);
            if (freqs_raw[end] - freqs_raw[end - 1]).abs() < CLUSTER_TOL * mean {
                end += 1;
            } else {
                break;
            }
        }
        let (vs, ps) = canonicalize_cluster(&cols[start..end], mats.reflection.as_deref());
        // keep the exact eigenvalue list sorted; a cluster shares its mean d
        for (i, (v, p)) in vs.into_iter().zip(ps).enumerate() {
            cols[start + i] = v;
            parity[start + i] = p;
        }
        start = end;
    }
    // Rayleigh quotient refresh of d for rotated cluster members.
    for (i, v) in cols.iter().enumerate() {
        let kv = &k * v;
        d[i] = v.dot(&kv);
    }
    let freqs: Vec<f64> = d.iter().map(|&x| 1.0 / x.sqrt()).collect();
    let mut vecs = DMatrix::<f64>::zeros(n, n);
    for (i, v) in cols.iter().enumerate() {
        vecs.set_row(i, &v.transpose());
    }
    let w: Vec<f64> = mats.ind_inv.iter().map(|&x| 1.0 / x.sqrt()).collect();
    let end_weights = DMatrix::from_fn(n, n, |row, mode| w[row] * vecs[(mode, row)]);
    Ok(NormalModeSet { freqs, d, vecs, end_weights, parity, index_map: mats.index_map.clone() })
}

fn apply_reflection(r: &[(usize, f64)], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for (i, &(t, s)) in r.iter().enumerate() {
        out[t] = s * v[i];
    }
    out
}

/// Parity ⟨v|R|v⟩/⟨v|v⟩ rounded to a label.
pub fn parity_label(r: &[(usize, f64)], v: &DVector<f64>) -> i8 {
    let x = v.dot(&apply_reflection(r, v)) / v.norm_squared();
    if x > PARITY_THRESHOLD {
        1
    } else if x < -PARITY_THRESHOLD {
        -1
    } else {
        0
    }
}

/// Deterministic basis of a degenerate cluster: reflection sectors first
/// (+1 before −1), then lexicographic Gram–Schmidt inside each sector,
/// then the sign rule (first significant entry positive).
pub fn canonicalize_cluster(
    cluster: &[DVector<f64>],
    reflection: Option<&[(usize, f64)]>,
) -> (Vec<DVector<f64>>, Vec<i8>) {
    let basis = orthonormalize(cluster);
    let mut out = Vec::with_capacity(basis.len());
    let mut labels = Vec::with_capacity(basis.len());
    match reflection {
        Some(r) if basis.len() > 1 => {
            let m = basis.len();
            let rb: Vec<DVector<f64>> = basis.iter().map(|v| apply_reflection(r, v)).collect();
            let q = DMatrix::from_fn(m, m, |a, b| 0.5 * (basis[a].dot(&rb[b]) + basis[b].dot(&rb[a])));
            let e = q.symmetric_eigen();
            let mut even = Vec::new();
            let mut odd = Vec::new();
            let mut mixed = Vec::new();
            for c in 0..m {
                let mut v = DVector::zeros(basis[0].len());
                for a in 0..m {
                    v += &basis[a] * e.eigenvectors[(a, c)];
                }
                let x = e.eigenvalues[c];
                if x > PARITY_THRESHOLD {
                    even.push(v);
                } else if x < -PARITY_THRESHOLD {
                    odd.push(v);
                } else {
                    mixed.push(v);
                }
            }
            for (set, label) in [(even, 1i8), (odd, -1i8), (mixed, 0i8)] {
                if set.is_empty() {
                    continue;
                }
                for v in lexicographic_basis(&set) {
                    out.push(v);
                    labels.push(label);
                }
            }
        }
        Some(r) => {
            for v in basis {
                labels.push(parity_label(r, &v));
                out.push(sign_fixed(v));
            }
        }
        None => {
            out = if basis.len() > 1 {
                lexicographic_basis(&basis)
            } else {
                basis.into_iter().map(sign_fixed).collect()
            };
            labels = vec![0; out.len()];
        }
    }
    (out, labels)
}

/// Modified Gram–Schmidt.
pub fn orthonormalize(vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&w);
                w.axpy(-c, u, 1.0);
            }
        }
        let n = w.norm();
        if n > 0.0 {
            out.push(w / n);
        }
    }
    out
}

/// Basis of span(vs) built by projecting unit vectors e_0, e_1, … in index
/// order; independent of the rotation of the input basis.
pub fn lexicographic_basis(vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let basis = orthonormalize(vs);
    let m = basis.len();
    let n = basis[0].len();
    let project = |i: usize| {
        let mut p = DVector::zeros(n);
        for b in &basis {
            p.axpy(b[i], b, 1.0);
        }
        p
    };
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(m);
    let accept = 1e-3 * (m as f64 / n as f64).sqrt();
    let mut residuals: Vec<(usize, DVector<f64>)> = Vec::new();
    for i in 0..n {
        if out.len() == m {
            break;
        }
        let mut p = project(i);
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&p);
                p.axpy(-c, u, 1.0);
            }
        }
        let norm = p.norm();
        if norm > accept {
            out.push(p / norm);
        } else {
            residuals.push((i, p));
        }
    }
    if out.len() < m {
        // pathological: fall back to largest residual projections
        let mut extra: Vec<(usize, DVector<f64>)> = residuals;
        extra.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()).then(a.0.cmp(&b.0)));
        for (_, mut p) in extra {
            if out.len() == m {
                break;
            }
            for u in &out {
                let c = u.dot(&p);
                p.axpy(-c, u, 1.0);
            }
            let norm = p.norm();
            if norm > 0.0 {
                out.push(p / norm);
            }
        }
    }
    out.into_iter().map(sign_fixed).collect()
}

/// Flip so that the first significant entry is positive.
pub fn sign_fixed(v: DVector<f64>) -> DVector<f64> {
    let max = v.amax();
    match v.iter().find(|x| x.abs() > 1e-8 * max) {
        Some(&x) if x < 0.0 => -v,
        _ => v,
    }
}

impl NormalModeSet {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Σ_j s(j, P)·W[(resonator, j), mode]; `resonator` is the global index
    /// cell·S + site.
    pub fn end_flux(&self, mode: usize, resonator: usize, parity: Parity) -> Result<f64> {
        let map = &self.index_map;
        let s = map.n_sites();
        if mode >= self.len() {
            return Err(Error::Index(format!("mode {mode} out of range ({} modes)", self.len())));
        }
        if resonator >= s * map.n_cells {
            return Err(Error::Index(format!("resonator {resonator} out of range")));
        }
        let (cell, site) = (resonator / s, resonator % s);
        let mut acc = 0.0;
        for j in 1..=map.cutoffs[site] {
            acc += parity.sign(j) * self.end_weights[(map.row(cell, site, j), mode)];
        }
        Ok(acc)
    }

    /// Weight Σ_j v² of each mode on each resonator (cell·S + site).
    pub fn site_participation(&self, mode: usize) -> Vec<f64> {
        let map = &self.index_map;
        let s = map.n_sites();
        let mut p = vec![0.0; s * map.n_cells];
        for row in 0..map.dim() {
            let (cell, site, _) = map.triple(row);
            p[cell * s + site] += self.vecs[(mode, row)].powi(2);
        }
        p
    }

    /// max_i ‖K v_i − d_i v_i‖ and max |V Vᵀ − I|.
    pub fn residuals(&self, mats: &CircuitMatrices) -> (f64, f64) {
        let k = rescaled_matrix(mats);
        let mut res: f64 = 0.0;
        for i in 0..self.len() {
            let v = self.vecs.row(i).transpose();
            let r = &k * &v - &v * self.d[i];
            res = res.max(r.norm() / v.norm());
        }
        let g = &self.vecs * self.vecs.transpose();
        let n = g.nrows();
        let ortho = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        (res, ortho)
    }
}
