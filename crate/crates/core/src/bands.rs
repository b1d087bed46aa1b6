//! Band structures, density of states over (E, t), flat-band detection,
//! gap detection and mode-cutoff convergence.

use rayon::prelude::*;

use crate::bloch::{dense_bloch_frequencies, BlochSolver};
use crate::circuit::bloch_blocks;
use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::tight_binding::{retune_device, TbModel};

/// Degree of parallelism for per-k / per-t work. Results never depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parallelism {
    pub threads: usize,
}

impl Parallelism {
    pub fn serial() -> Self {
        Parallelism { threads: 1 }
    }
    pub fn threads(n: usize) -> Self {
        Parallelism { threads: n.max(1) }
    }
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::serial()
    }
}

/// Map `f` over `items`, keeping input order. Each item is computed
/// independently, so the output is the same for any thread count.
pub fn run_ordered<T, R, F>(par: Parallelism, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if par.threads <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(par.threads)
        .build()
        .map_err(|e| Error::Convergence(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>()).into_iter().collect()
}

/// Range of harmonic families j_lo..=j_hi.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicWindow {
    pub j_lo: usize,
    pub j_hi: usize,
}

impl HarmonicWindow {
    pub fn single(j: usize) -> Self {
        HarmonicWindow { j_lo: j, j_hi: j }
    }
    pub fn hw() -> Self {
        Self::single(1)
    }
    pub fn fw() -> Self {
        Self::single(2)
    }
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let w = match s.as_str() {
            "hw" => Self::hw(),
            "fw" => Self::fw(),
            _ => {
                let (a, b) = s.split_once("..").unwrap_or((&s, &s));
                let p = |x: &str| {
                    x.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad harmonic window '{s}'")))
                };
                HarmonicWindow { j_lo: p(a)?, j_hi: p(b)? }
            }
        };
        if w.j_lo == 0 || w.j_hi < w.j_lo {
            return Err(Error::Domain(format!("empty harmonic window '{s}'")));
        }
        Ok(w)
    }
    pub fn label(&self) -> String {
        match (self.j_lo, self.j_hi) {
            (1, 1) => "hw".into(),
            (2, 2) => "fw".into(),
            (a, b) if a == b => format!("{a}"),
            (a, b) => format!("{a}..{b}"),
        }
    }
    /// Sorted band indices covered, for `s` sites per cell.
    pub fn band_range(&self, s: usize) -> (usize, usize) {
        (s * (self.j_lo - 1), s * self.j_hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMethod {
    /// Inertia-counting solver on the coupler-end space.
    Secular,
    /// Dense Hermitian eigensolve of the Bloch matrix.
    Dense,
}

#[derive(Debug, Clone)]
pub struct BandStructure {
    pub k_grid: Vec<f64>,
    /// bands[ik][b], angular frequency, ascending per k.
    pub bands: Vec<Vec<f64>>,
    pub window: HarmonicWindow,
}

impl BandStructure {
    pub fn n_bands(&self) -> usize {
        self.bands.first().map_or(0, |b| b.len())
    }
    pub fn band(&self, b: usize) -> impl Iterator<Item = f64> + '_ {
        self.bands.iter().map(move |row| row[b])
    }
    pub fn band_min(&self, b: usize) -> f64 {
        self.band(b).fold(f64::INFINITY, f64::min)
    }
    pub fn band_max(&self, b: usize) -> f64 {
        self.band(b).fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn width(&self, b: usize) -> f64 {
        self.band_max(b) - self.band_min(b)
    }
    /// Width of the whole window (top of the highest band − bottom of the lowest).
    pub fn family_width(&self) -> f64 {
        let n = self.n_bands();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|b| self.band_max(b)).fold(f64::MIN, f64::max)
            - (0..n).map(|b| self.band_min(b)).fold(f64::MAX, f64::min)
    }
}

/// Band families are identified by sorted index: family j occupies indices
/// [S(j−1), Sj), the adiabatic continuation of the decoupled levels j·ω̃_0
/// as long as neighbouring families never touch. `row` carries one extra
/// level on each side (when it exists) so the family boundaries can be
/// checked; touching families are reported as a tracking failure.
fn trim_family(row: Vec<f64>, below: bool, above: bool, k: f64) -> Result<Vec<f64>> {
    let n = row.len();
    let (s, e) = (below as usize, n - above as usize);
    let touch = |i: usize| (row[i] - row[i - 1]) <= 1e-9 * row[i];
    if (below && touch(1)) || (above && touch(n - 1)) {
        return Err(Error::Tracking(format!(
            "harmonic families touch at k = {k:.6}; band assignment from the decoupled limit is ambiguous"
        )));
    }
    Ok(row[s..e].to_vec())
}

pub fn bloch_bands(
    device: &DeviceSpec,
    k_grid: &[f64],
    window: HarmonicWindow,
    method: BandMethod,
    par: Parallelism,
) -> Result<BandStructure> {
    let s = device.n_sites();
    if device.resonators.iter().any(|r| r.mode_cutoff < window.j_hi) {
        return Err(Error::Index(format!(
            "harmonic window {} exceeds the device mode cutoff",
            window.label()
        )));
    }
    if let Some(k) = k_grid.iter().find(|k| !(**k >= -std::f64::consts::PI && **k < std::f64::consts::PI)) {
        return Err(Error::Domain(format!("k = {k} outside [-pi, pi)")));
    }
    let (lo, hi) = window.band_range(s);
    let total: usize = device.cutoffs().iter().sum();
    let (below, above) = (lo > 0, hi < total);
    let (lo_x, hi_x) = (lo - below as usize, hi + above as usize);
    let bands = match method {
        BandMethod::Secular => {
            let solver = BlochSolver::new(device)?;
            run_ordered(par, k_grid, |&k| trim_family(solver.levels(k, lo_x, hi_x)?, below, above, k))?
        }
        BandMethod::Dense => {
            let blocks = bloch_blocks(device)?;
            run_ordered(par, k_grid, |&k| {
                let all = dense_bloch_frequencies(&blocks, k)?;
                trim_family(all[lo_x..hi_x].to_vec(), below, above, k)
            })?
        }
    };
    Ok(BandStructure { k_grid: k_grid.to_vec(), bands, window })
}

// ---------------------------------------------------------------------------
// Density of states

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    Fixed,
    /// Energy axis is (E − j·ω̃_0)/t, so the window scales linearly with t.
    Scaled,
}

impl WindowMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowMode::Fixed => "fixed",
            WindowMode::Scaled => "t_scaled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DosOptions {
    pub window: HarmonicWindow,
    pub mode: WindowMode,
    /// Fixed mode: absolute angular frequencies. Scaled mode: offsets in
    /// units of t.
    pub energies: Vec<f64>,
    /// Gaussian σ; `None` picks t/50 (scaled) or span/500 (fixed).
    pub broadening: Option<f64>,
    pub n_k: usize,
    /// Renormalized fundamental kept fixed while t is swept.
    pub omega_tilde: f64,
    pub cc_prime_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct DosGrid {
    /// Fixed: angular frequency; scaled: (E − center)/t.
    pub energies: Vec<f64>,
    pub t_values: Vec<f64>,
    /// dos[it][ie], states per unit angular frequency per unit cell.
    pub dos: Vec<Vec<f64>>,
    pub window_mode: WindowMode,
    /// Window center j·ω̃_0 (angular frequency).
    pub center: f64,
    /// Number of bands accumulated per t.
    pub n_bands: usize,
    pub sigma: Vec<f64>,
}

impl DosGrid {
    /// Absolute energy of grid point `ie` at sweep index `it`.
    pub fn energy(&self, it: usize, ie: usize) -> f64 {
        match self.window_mode {
            WindowMode::Fixed => self.energies[ie],
            WindowMode::Scaled => self.center + self.energies[ie] * self.t_values[it],
        }
    }
    /// ∫ dos dE for row `it` (trapezoid on the absolute energy axis).
    pub fn integral(&self, it: usize) -> f64 {
        let n = self.energies.len();
        (1..n)
            .map(|i| 0.5 * (self.dos[it][i] + self.dos[it][i - 1]) * (self.energy(it, i) - self.energy(it, i - 1)))
            .sum()
    }
}

/// Gaussian-broadened histogram of band energies, normalized per cell.
pub fn histogram(bs: &BandStructure, energies: &[f64], sigma: f64) -> Vec<f64> {
    let norm = 1.0 / (bs.k_grid.len() as f64 * sigma * (2.0 * std::f64::consts::PI).sqrt());
    energies
        .iter()
        .map(|&e| {
            let mut acc = 0.0;
            for row in &bs.bands {
                for &w in row {
                    let x = (e - w) / sigma;
                    if x.abs() < 40.0 {
                        acc += (-0.5 * x * x).exp();
                    }
                }
            }
            acc * norm
        })
        .collect()
}

pub fn dos(device: &DeviceSpec, t_values: &[f64], opts: &DosOptions, par: Parallelism) -> Result<DosGrid> {
    if opts.energies.len() < 2 {
        return Err(Error::Domain("energy grid needs at least two points".into()));
    }
    let k = crate::bloch::k_grid(opts.n_k);
    let center = opts.window.j_lo as f64 * opts.omega_tilde;
    let rows = run_ordered(par, t_values, |&t| {
        let dev = retune_device(device, t, opts.omega_tilde, opts.cc_prime_ratio)?;
        let bs = bloch_bands(&dev, &k, opts.window, BandMethod::Secular, Parallelism::serial())?;
        let (abs, sigma): (Vec<f64>, f64) = match opts.mode {
            WindowMode::Fixed => {
                let span = opts.energies[opts.energies.len() - 1] - opts.energies[0];
                (opts.energies.clone(), opts.broadening.unwrap_or(span / 500.0))
            }
            WindowMode::Scaled => (
                opts.energies.iter().map(|u| center + u * t).collect(),
                opts.broadening.map_or(t / 50.0, |b| b * t),
            ),
        };
        if !(sigma > 0.0) {
            return Err(Error::Domain("DoS broadening must be positive (t = 0 in scaled mode?)".into()));
        }
        Ok((histogram(&bs, &abs, sigma), sigma, bs.n_bands()))
    })?;
    let n_bands = rows.first().map_or(0, |r| r.2);
    Ok(DosGrid {
        energies: opts.energies.clone(),
        t_values: t_values.to_vec(),
        sigma: rows.iter().map(|r| r.1).collect(),
        dos: rows.into_iter().map(|r| r.0).collect(),
        window_mode: opts.mode,
        center,
        n_bands,
    })
}

/// `n` points from a to b, optionally log-spaced.
pub fn sweep(a: f64, b: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            if log {
                (a.ln() + x * (b.ln() - a.ln())).exp()
            } else {
                a + x * (b - a)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Flat bands and gaps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandParity {
    Even,
    Odd,
    Mixed,
    Unknown,
}

impl BandParity {
    pub fn as_str(self) -> &'static str {
        match self {
            BandParity::Even => "even",
            BandParity::Odd => "odd",
            BandParity::Mixed => "mixed",
            BandParity::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlatBandReport {
    /// Sorted band index within the window.
    pub band: usize,
    pub center: f64,
    pub bandwidth: f64,
    pub degeneracy: usize,
    pub parity: BandParity,
    /// Participation ratio of the site weights at the parity momentum
    /// (1 = one resonator, S = uniform over the cell).
    pub localization: f64,
    /// bandwidth ≥ tol: reported as nearly flat.
    pub marginal: bool,
    pub tol: f64,
}

/// Flat-band tolerance max(1e-9·ω, 1e-3·t).
pub fn flat_tolerance(center: f64, t: f64) -> f64 {
    (1e-9 * center).max(1e-3 * t)
}

/// Flat bands of `bs`. `t` sets the default tolerance; `tol` overrides it.
pub fn detect_flat_bands(device: &DeviceSpec, bs: &BandStructure, t: f64, tol: Option<f64>) -> Result<Vec<FlatBandReport>> {
    let n = bs.n_bands();
    if n == 0 {
        return Ok(Vec::new());
    }
    let centers: Vec<f64> = (0..n).map(|b| 0.5 * (bs.band_max(b) + bs.band_min(b))).collect();
    let widths: Vec<f64> = (0..n).map(|b| bs.width(b)).collect();
    let tols: Vec<f64> = centers.iter().map(|&c| tol.unwrap_or(flat_tolerance(c, t))).collect();
    let flat: Vec<bool> = (0..n).map(|b| widths[b] < 10.0 * tols[b]).collect();
    let solver = BlochSolver::new(device)?;
    let (lo, _) = bs.window.band_range(device.n_sites());
    let mut out = Vec::new();
    for b in 0..n {
        if !flat[b] {
            continue;
        }
        // contiguous cluster of flat bands sharing the center
        let mut c0 = b;
        while c0 > 0 && flat[c0 - 1] && (centers[c0 - 1] - centers[b]).abs() < tols[b] {
            c0 -= 1;
        }
        let mut c1 = b + 1;
        while c1 < n && flat[c1] && (centers[c1] - centers[b]).abs() < tols[b] {
            c1 += 1;
        }
        // momentum where the cluster is most isolated from the other bands
        let mut best = (f64::NEG_INFINITY, 0);
        for (ik, row) in bs.bands.iter().enumerate() {
            let below = if c0 > 0 { row[c0] - row[c0 - 1] } else { f64::INFINITY };
            let above = if c1 < n { row[c1] - row[c1 - 1] } else { f64::INFINITY };
            let g = below.min(above);
            if g > best.0 {
                best = (g, ik);
            }
        }
        let k = bs.k_grid[best.1];
        let lv = solver.levels_with_vectors(k, lo + c0, lo + c1)?;
        let (_, v, p) = &lv[b - c0];
        let parity = if device.reflection.is_none() {
            BandParity::Unknown
        } else {
            match p {
                1 => BandParity::Even,
                -1 => BandParity::Odd,
                _ => BandParity::Mixed,
            }
        };
        let mut weights = vec![0.0; device.n_sites()];
        let mut row = 0;
        for (s, r) in device.resonators.iter().enumerate() {
            for _ in 0..r.mode_cutoff {
                weights[s] += v[row].norm_sqr();
                row += 1;
            }
        }
        let sum: f64 = weights.iter().sum();
        let sq: f64 = weights.iter().map(|w| w * w).sum();
        out.push(FlatBandReport {
            band: b,
            center: centers[b],
            bandwidth: widths[b],
            degeneracy: c1 - c0,
            parity,
            localization: sum * sum / sq,
            marginal: widths[b] >= tols[b],
            tol: tols[b],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Gap {
    /// Gap between band `below` and band `below + 1`.
    pub below: usize,
    pub lower_edge: f64,
    pub upper_edge: f64,
    /// upper_edge − lower_edge; ≤ 0 means the bands touch or overlap.
    pub size: f64,
}

pub fn gaps(bs: &BandStructure) -> Vec<Gap> {
    (0..bs.n_bands().saturating_sub(1))
        .map(|b| {
            let lower_edge = bs.band_max(b);
            let upper_edge = bs.band_min(b + 1);
            Gap { below: b, lower_edge, upper_edge, size: upper_edge - lower_edge }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GapComparison {
    pub below: usize,
    pub tb_gap: f64,
    pub full_gap: f64,
    /// Gap present in the circuit where the TB bands touch.
    pub opened: bool,
}

/// Compare the full-circuit gaps with those of the TB model of the same
/// device. A gap counts as opened when the TB gap is below `touch_tol` and
/// the circuit gap exceeds it.
pub fn compare_gaps(device: &DeviceSpec, bs: &BandStructure, touch_tol: f64) -> Result<Vec<GapComparison>> {
    let model = TbModel::from_device(device)?;
    if bs.window.j_lo != bs.window.j_hi {
        return Err(Error::Domain("gap comparison needs a single harmonic family".into()));
    }
    let j = bs.window.j_lo;
    let tb = BandStructure {
        k_grid: bs.k_grid.clone(),
        bands: bs.k_grid.iter().map(|&k| model.bloch_spectrum(j, k)).collect(),
        window: bs.window,
    };
    Ok(gaps(bs)
        .into_iter()
        .zip(gaps(&tb))
        .map(|(f, t)| GapComparison {
            below: f.below,
            tb_gap: t.size,
            full_gap: f.size,
            opened: t.size < touch_tol && f.size > touch_tol,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Cutoff convergence

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub m_list: Vec<usize>,
    pub k_grid: Vec<f64>,
    /// energies[iM][ik][b]
    pub energies: Vec<Vec<Vec<f64>>>,
    /// Extrapolated E_∞[ik][b].
    pub e_inf: Vec<Vec<f64>>,
    /// Mean |E(M) − E_∞| over k and bands, per M.
    pub mean_abs: Vec<f64>,
    pub std_abs: Vec<f64>,
    /// RMS of the fit residuals over all (k, band, M).
    pub fit_rms: f64,
}

impl ConvergenceTable {
    /// The 1/M model explains the data: fit residuals are small compared
    /// with the deviation at the smallest cutoff, and successive mean
    /// deviations scale like 1/M within a factor of 2.
    pub fn fit_ok(&self) -> bool {
        let n = self.m_list.len();
        if self.mean_abs[0] == 0.0 {
            return self.fit_rms == 0.0;
        }
        if self.fit_rms > 0.1 * self.mean_abs[0] {
            return false;
        }
        (1..n).all(|i| {
            let expect = self.m_list[i - 1] as f64 / self.m_list[i] as f64;
            let got = self.mean_abs[i] / self.mean_abs[i - 1];
            got <= 2.0 * expect && got >= 0.5 * expect
        })
    }
}

/// Least-squares fit E = E_∞ + a/M; returns (E_∞, a).
pub fn fit_inverse_m(m: &[f64], e: &[f64]) -> Result<(f64, f64)> {
    if m.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 cutoffs, got {}", m.len())));
    }
    let n = m.len() as f64;
    let x: Vec<f64> = m.iter().map(|v| 1.0 / v).collect();
    let mx = x.iter().sum::<f64>() / n;
    let me = e.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxe: f64 = x.iter().zip(e).map(|(v, w)| (v - mx) * (w - me)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("cutoffs must be distinct".into()));
    }
    let a = sxe / sxx;
    Ok((me - a * mx, a))
}

pub fn convergence_study(
    device: &DeviceSpec,
    m_list: &[usize],
    k_grid: &[f64],
    window: HarmonicWindow,
    par: Parallelism,
) -> Result<ConvergenceTable> {
    if m_list.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 cutoffs, got {}", m_list.len())));
    }
    if m_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("cutoff list must be strictly ascending".into()));
    }
    let mut energies = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let dev = device.with_mode_cutoff(m);
        energies.push(bloch_bands(&dev, k_grid, window, BandMethod::Secular, par)?.bands);
    }
    let mf: Vec<f64> = m_list.iter().map(|&m| m as f64).collect();
    let nk = k_grid.len();
    let nb = energies[0].first().map_or(0, |r| r.len());
    let mut e_inf = vec![vec![0.0; nb]; nk];
    let mut dev_abs = vec![Vec::with_capacity(nk * nb); m_list.len()];
    let mut res2 = 0.0;
    for ik in 0..nk {
        for b in 0..nb {
            let e: Vec<f64> = energies.iter().map(|en| en[ik][b]).collect();
            let (einf, a) = fit_inverse_m(&mf, &e)?;
            e_inf[ik][b] = einf;
            for (im, &m) in mf.iter().enumerate() {
                dev_abs[im].push((e[im] - einf).abs());
                let r = e[im] - (einf + a / m);
                res2 += r * r;
            }
        }
    }
    let cnt = (nk * nb) as f64;
    let mean_abs: Vec<f64> = dev_abs.iter().map(|d| d.iter().sum::<f64>() / cnt).collect();
    let std_abs = dev_abs
        .iter()
        .zip(&mean_abs)
        .map(|(d, m)| (d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / cnt).sqrt())
        .collect();
    Ok(ConvergenceTable {
        m_list: m_list.to_vec(),
        k_grid: k_grid.to_vec(),
        energies,
        e_inf,
        mean_abs,
        std_abs,
        fit_rms: (res2 / (cnt * mf.len() as f64)).sqrt(),
    })
}
