//! Assembly of the capacitance matrix C and the diagonal inverse-inductance
//! matrix of the multimode lattice Lagrangian ½Φ̇ᵀCΦ̇ − ½ΦᵀL⁻¹Φ.
//!
//! Each coupler contributes ½C_c(φ_a − φ_b)² with end fluxes
//! φ⁺ = Σ_j φ_j and φ⁻ = Σ_j (−1)^j φ_j; every term is added explicitly so
//! that `cap` is bit-symmetric by construction.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::device::{Boundary, CouplerSpec, DeviceSpec, End, IndexMap, Loading, Paddle, Parity};
use crate::error::{Error, Result};

/// Smallest acceptable Cholesky pivot (farad).
pub const PIVOT_FLOOR: f64 = 1e-18;

#[derive(Debug, Clone)]
pub struct CircuitMatrices {
    pub cap: DMatrix<f64>,
    /// Diagonal of L⁻¹: j²/L_0 per row.
    pub ind_inv: DVector<f64>,
    pub index_map: IndexMap,
    /// Reflection as a signed row permutation, when the device carries
    /// symmetry metadata.
    pub reflection: Option<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone)]
pub struct BlochBlocks {
    pub onsite: DMatrix<f64>,
    /// Block (n, n+1) of the full matrix.
    pub hop: DMatrix<f64>,
    pub ind_inv: DVector<f64>,
    pub index_map: IndexMap,
    pub reflection: Option<Vec<(usize, f64)>>,
}

/// Rows and harmonic numbers of one resonator.
struct SiteRows {
    start: usize,
    m: usize,
}

impl SiteRows {
    fn new(map: &IndexMap, cell: usize, site: usize) -> Self {
        SiteRows { start: map.row(cell, site, 1), m: map.cutoffs[site] }
    }
}

/// cap[(n,j),(n,j')] += c·s(j)s(j') for all j, j' (one end of one resonator).
fn add_end_self(cap: &mut DMatrix<f64>, r: &SiteRows, p: Parity, c: f64) {
    for j in 1..=r.m {
        let sj = p.sign(j);
        for jp in 1..=r.m {
            cap[(r.start + j - 1, r.start + jp - 1)] += c * (sj * p.sign(jp));
        }
    }
}

/// Cross terms −c·s_a(j)s_b(j') and their transposes.
fn add_cross(cap: &mut DMatrix<f64>, ra: &SiteRows, pa: Parity, rb: &SiteRows, pb: Parity, c: f64) {
    for j in 1..=ra.m {
        for jp in 1..=rb.m {
            let v = -c * (pa.sign(j) * pb.sign(jp));
            cap[(ra.start + j - 1, rb.start + jp - 1)] += v;
            cap[(rb.start + jp - 1, ra.start + j - 1)] += v;
        }
    }
}

/// Cross terms into an off-diagonal block (no transpose).
fn add_block(block: &mut DMatrix<f64>, ra: &SiteRows, pa: Parity, rb: &SiteRows, pb: Parity, c: f64) {
    for j in 1..=ra.m {
        for jp in 1..=rb.m {
            block[(ra.start + j - 1, rb.start + jp - 1)] += -c * (pa.sign(j) * pb.sign(jp));
        }
    }
}

fn add_loading(cap: &mut DMatrix<f64>, r: &SiteRows, l: Loading) {
    match l.paddle {
        Paddle::None => {}
        Paddle::Plus => add_end_self(cap, r, Parity::Plus, l.cc_prime),
        Paddle::Minus => add_end_self(cap, r, Parity::Minus, l.cc_prime),
        Paddle::Split => {
            add_end_self(cap, r, Parity::Plus, 0.5 * l.cc_prime);
            add_end_self(cap, r, Parity::Minus, 0.5 * l.cc_prime);
        }
    }
}

fn ind_inv(map: &IndexMap, device: &DeviceSpec) -> DVector<f64> {
    let mut v = DVector::zeros(map.dim());
    for cell in 0..map.n_cells {
        for (s, r) in device.resonators.iter().enumerate() {
            let l0 = r.l0();
            for j in 1..=r.mode_cutoff {
                v[map.row(cell, s, j)] = (j * j) as f64 / l0;
            }
        }
    }
    v
}

/// Partner cell of `cell` across an inter-cell coupler, respecting the
/// boundary condition.
fn partner(device: &DeviceSpec, cell: usize, c: &CouplerSpec) -> Option<usize> {
    let t = cell + c.cell_offset;
    match device.boundary {
        Boundary::Open => (t < device.n_cells).then_some(t),
        Boundary::Periodic => Some(t % device.n_cells),
    }
}

pub fn build_matrices(device: &DeviceSpec) -> Result<CircuitMatrices> {
    let map = device.index_map();
    let n = map.dim();
    let mut cap = DMatrix::<f64>::zeros(n, n);
    let rows = |cell: usize, site: usize| SiteRows::new(&map, cell, site);

    for cell in 0..device.n_cells {
        for (s, r) in device.resonators.iter().enumerate() {
            let c0 = r.c0();
            for j in 1..=r.mode_cutoff {
                let i = map.row(cell, s, j);
                cap[(i, i)] = c0;
            }
        }
    }
    for c in &device.couplers {
        let cc = c.cc();
        for cell in 0..device.n_cells {
            let (ra, rb) = (rows(cell, c.a.site), rows(cell, c.b.site));
            add_end_self(&mut cap, &ra, c.a.parity, cc);
            add_end_self(&mut cap, &rb, c.b.parity, cc);
            add_cross(&mut cap, &ra, c.a.parity, &rb, c.b.parity, cc);
        }
    }
    // Same per-entry accumulation order as `bloch_blocks`: all a-side self
    // terms, then all b-side self terms, then the cross terms.
    for c in &device.inter_cell_couplers {
        let cc = c.cc();
        for cell in 0..device.n_cells {
            if partner(device, cell, c).is_some() {
                add_end_self(&mut cap, &rows(cell, c.a.site), c.a.parity, cc);
            }
        }
        for cell in 0..device.n_cells {
            if let Some(t) = partner(device, cell, c) {
                add_end_self(&mut cap, &rows(t, c.b.site), c.b.parity, cc);
            }
        }
        for cell in 0..device.n_cells {
            if let Some(t) = partner(device, cell, c) {
                add_cross(&mut cap, &rows(cell, c.a.site), c.a.parity, &rows(t, c.b.site), c.b.parity, cc);
            }
        }
    }
    for cell in 0..device.n_cells {
        for s in 0..device.n_sites() {
            add_loading(&mut cap, &rows(cell, s), device.loading(cell, s));
        }
    }
    check_positive_definite(&cap)?;
    Ok(CircuitMatrices {
        ind_inv: ind_inv(&map, device),
        cap,
        reflection: reflection_rows(device, &map),
        index_map: map,
    })
}

pub fn bloch_blocks(device: &DeviceSpec) -> Result<BlochBlocks> {
    if device.boundary != Boundary::Periodic {
        return Err(Error::Topology("Bloch analysis requires a periodic lattice".into()));
    }
    if let Some(c) = device.inter_cell_couplers.iter().find(|c| c.cell_offset != 1) {
        return Err(Error::Topology(format!(
            "inter-cell coupler {:?}-{:?} spans {} cells; only nearest-cell couplers are allowed",
            c.a, c.b, c.cell_offset
        )));
    }
    let loading = device.cell_loading()?;
    let map = device.unit_cell_map();
    let n = map.dim();
    let rows = |site: usize| SiteRows::new(&map, 0, site);
    let mut onsite = DMatrix::<f64>::zeros(n, n);
    let mut hop = DMatrix::<f64>::zeros(n, n);
    for (s, r) in device.resonators.iter().enumerate() {
        let c0 = r.c0();
        for j in 1..=r.mode_cutoff {
            let i = map.row(0, s, j);
            onsite[(i, i)] = c0;
        }
    }
    for c in &device.couplers {
        let cc = c.cc();
        let (ra, rb) = (rows(c.a.site), rows(c.b.site));
        add_end_self(&mut onsite, &ra, c.a.parity, cc);
        add_end_self(&mut onsite, &rb, c.b.parity, cc);
        add_cross(&mut onsite, &ra, c.a.parity, &rb, c.b.parity, cc);
    }
    for c in &device.inter_cell_couplers {
        let cc = c.cc();
        let (ra, rb) = (rows(c.a.site), rows(c.b.site));
        add_end_self(&mut onsite, &ra, c.a.parity, cc);
        add_end_self(&mut onsite, &rb, c.b.parity, cc);
        add_block(&mut hop, &ra, c.a.parity, &rb, c.b.parity, cc);
    }
    for (s, l) in loading.iter().enumerate() {
        add_loading(&mut onsite, &rows(s), *l);
    }
    Ok(BlochBlocks {
        onsite,
        hop,
        ind_inv: ind_inv(&map, device),
        reflection: reflection_rows(device, &map),
        index_map: map,
    })
}

impl BlochBlocks {
    /// Full block-circulant matrix for `n_cells` cells.
    pub fn assemble(&self, n_cells: usize) -> DMatrix<f64> {
        let d = self.onsite.nrows();
        let mut full = DMatrix::<f64>::zeros(d * n_cells, d * n_cells);
        for n in 0..n_cells {
            full.view_mut((n * d, n * d), (d, d)).copy_from(&self.onsite);
        }
        for n in 0..n_cells {
            let m = (n + 1) % n_cells;
            for i in 0..d {
                for j in 0..d {
                    full[(n * d + i, m * d + j)] += self.hop[(i, j)];
                    full[(m * d + j, n * d + i)] += self.hop[(i, j)];
                }
            }
        }
        full
    }

    /// C(k) = onsite + hop·e^{ik} + hopᵀ·e^{−ik}.
    pub fn symbol(&self, k: f64) -> DMatrix<nalgebra::Complex<f64>> {
        let (s, c) = k.sin_cos();
        let d = self.onsite.nrows();
        DMatrix::from_fn(d, d, |i, j| {
            let h = self.hop[(i, j)];
            let ht = self.hop[(j, i)];
            nalgebra::Complex::new(self.onsite[(i, j)] + (h + ht) * c, (h - ht) * s)
        })
    }
}

/// Signed row permutation of the cell reflection: row (c, s, j) maps to
/// (c, π(s), j) with sign (−1)^j when the resonator is end-reversed.
pub fn reflection_rows(device: &DeviceSpec, map: &IndexMap) -> Option<Vec<(usize, f64)>> {
    let r = device.reflection.as_ref()?;
    let mut out = vec![(0, 0.0); map.dim()];
    for cell in 0..map.n_cells {
        for s in 0..map.n_sites() {
            for j in 1..=map.cutoffs[s] {
                let sign = if r.end_swap[s] { Parity::Minus.sign(j) } else { 1.0 };
                out[map.row(cell, s, j)] = (map.row(cell, r.permutation[s], j), sign);
            }
        }
    }
    Some(out)
}

/// Cholesky factorization with an explicit pivot floor.
pub fn check_positive_definite(cap: &DMatrix<f64>) -> Result<()> {
    let n = cap.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cap[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > PIVOT_FLOOR) {
            return Err(Error::PositiveDefiniteness { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = cap[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(())
}

/// End vector u_P of one resonator inside a cell: u(j) = s(j, P).
pub fn end_vector(map: &IndexMap, cell: usize, end: End) -> DVector<f64> {
    let mut v = DVector::zeros(map.dim());
    for j in 1..=map.cutoffs[end.site] {
        v[map.row(cell, end.site, j)] = end.parity.sign(j);
    }
    v
}

/// Dump the non-zero entries of a matrix as `row,col,value` with 17
/// significant digits.
pub fn write_matrix_csv<W: Write>(mut w: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "row,col,value")?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(w, "{i},{j},{v:.16e}")?;
            }
        }
    }
    Ok(())
}
