//! Subcommand arguments and their computations. Every command produces a
//! `Table` (or JSON for `fwm`) from its arguments and a `Ctx`; nothing here
//! touches the filesystem except the optional side outputs.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use cpw_lattice::bands::{
    bloch_bands, compare_gaps, convergence_study, detect_flat_bands, dos, gaps, sweep, BandMethod, BandStructure,
    DosOptions, HarmonicWindow, Parallelism, WindowMode,
};
use cpw_lattice::bloch::k_grid;
use cpw_lattice::circuit::build_matrices;
use cpw_lattice::device::DeviceSpec;
use cpw_lattice::mixing::{
    fwm_amplitude_small_alpha, fwm_amplitude_tls, fwm_amplitude_transmon, fwm_oracle_exact, resonant_pump, FwmProblem,
};
use cpw_lattice::modes::solve_modes;
use cpw_lattice::presets::rhombus_chain;
use cpw_lattice::saturation::{lindblad_curve, p_sat, power_slope, raman_rate, Ladder};
use cpw_lattice::tight_binding::{retune_device, tb_deviation, TbModel};
use cpw_lattice::transmon::{coupling_table, flat_band_catalog, transmon_params};
use cpw_lattice::units::{ghz, mhz, to_ghz, to_mhz};
use cpw_lattice::{Error, Result};

use crate::output::{num, sig, sig_n, Table};

/// Cutoff of the built-in device when no `--device` is given.
pub const BUILTIN_CUTOFF: usize = 4;

#[derive(Debug, Clone)]
pub struct Ctx {
    pub device: Option<DeviceSpec>,
    pub cutoff: Option<usize>,
    pub par: Parallelism,
}

impl Ctx {
    pub fn device(&self) -> DeviceSpec {
        let d = self.device.clone().unwrap_or_else(|| rhombus_chain(BUILTIN_CUTOFF));
        match self.cutoff {
            Some(m) => d.with_mode_cutoff(m),
            None => d,
        }
    }
}

fn invalid(path: &str, msg: impl Into<String>) -> Error {
    Error::validation(path, msg)
}

fn parse_list<T: std::str::FromStr>(s: &str, path: &str) -> Result<Vec<T>> {
    let v: std::result::Result<Vec<T>, _> = s.split(',').map(|x| x.trim()).filter(|x| !x.is_empty()).map(str::parse).collect();
    let v = v.map_err(|_| invalid(path, format!("cannot parse list '{s}'")))?;
    if v.is_empty() {
        return Err(invalid(path, "list is empty"));
    }
    Ok(v)
}

/// `a:b:n[:log|:lin]` or a comma list. The result must be nonempty and
/// strictly monotone.
pub fn parse_grid(s: &str, log_default: bool, path: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(invalid(path, format!("expected a:b:n[:log|:lin], got '{s}'")));
        }
        let f = |x: &str| x.parse::<f64>().map_err(|_| invalid(path, format!("bad number '{x}'")));
        let (a, b) = (f(parts[0])?, f(parts[1])?);
        let n: usize = parts[2].parse().map_err(|_| invalid(path, format!("bad point count '{}'", parts[2])))?;
        let log = match parts.get(3) {
            None => log_default,
            Some(&"log") => true,
            Some(&"lin") => false,
            Some(x) => return Err(invalid(path, format!("unknown spacing '{x}'"))),
        };
        if n == 0 {
            return Err(invalid(path, "sweep grid is empty"));
        }
        if log && !(a > 0.0 && b > 0.0) {
            return Err(invalid(path, "log grid needs positive end points"));
        }
        sweep(a, b, n, log)
    } else {
        if s.is_empty() {
            return Err(invalid(path, "sweep grid is empty"));
        }
        parse_list::<f64>(s, path)?
    };
    check_grid(&grid, path)?;
    Ok(grid)
}

pub fn check_grid(grid: &[f64], path: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(path, "sweep grid is empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(invalid(path, "grid values must be finite"));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(invalid(path, "grid must be strictly monotone"));
    }
    Ok(())
}

fn window(s: &str) -> Result<HarmonicWindow> {
    HarmonicWindow::parse(s).map_err(|e| invalid("window", e.to_string()))
}

fn positive(x: f64, path: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(path, format!("must be positive, got {x}")))
    }
}

/// Optional retuning of the device couplings to a target hopping.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Tune {
    /// Retune C_0 and C_c so the lattice has this hopping t/2π (MHz)
    #[arg(long = "t-MHz")]
    pub t_mhz: Option<f64>,
    /// Renormalized fundamental kept fixed while retuning (GHz)
    #[arg(long = "omega-tilde-GHz", default_value_t = 5.0)]
    pub omega_tilde_ghz: f64,
    /// Paddle capacitance C_c'/C_c used when retuning
    #[arg(long = "cc-prime-ratio", default_value_t = 0.5)]
    pub cc_prime_ratio: f64,
}

impl Tune {
    fn apply(&self, d: DeviceSpec, t_default: Option<f64>) -> Result<DeviceSpec> {
        match self.t_mhz.or(t_default) {
            Some(t) => {
                positive(t, "t-MHz")?;
                positive(self.omega_tilde_ghz, "omega-tilde-GHz")?;
                retune_device(&d, mhz(t), ghz(self.omega_tilde_ghz), self.cc_prime_ratio)
            }
            None => Ok(d),
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModesArgs {
    #[command(flatten)]
    pub tune: Tune,
    /// Write the capacitance matrix and the L⁻¹ diagonal as (row, col, value)
    /// CSV files `<prefix>.cap.csv` and `<prefix>.ind_inv.csv`
    #[arg(long)]
    #[serde(skip)]
    pub dump_matrices: Option<PathBuf>,
}

impl ModesArgs {
    pub const COLUMNS: &'static [&'static str] = &["mode_index", "freq_GHz", "d", "parity", "participation_top5_sites"];
    pub const UNITS: &'static str = "freq GHz; d = 1/omega^2 (s^2); participation = weight fraction per resonator";

    pub fn device(&self, ctx: &Ctx) -> Result<DeviceSpec> {
        self.tune.apply(ctx.device(), None)
    }

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        let dev = self.device(ctx)?;
        let modes = solve_modes(&build_matrices(&dev)?)?;
        let mut t = Table::new(Self::COLUMNS);
        for m in 0..modes.len() {
            let p = modes.site_participation(m);
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
            let top: Vec<String> = idx.iter().take(5).map(|&i| format!("{i}:{}", sig_n(p[i], 6))).collect();
            t.rows.push(vec![
                m.to_string(),
                sig(to_ghz(modes.freqs[m])),
                sig(modes.d[m]),
                parity_str(modes.parity[m]).into(),
                top.join(" "),
            ]);
        }
        let (res, orth) = modes.residuals(&build_matrices(&dev)?);
        t.notes.push(format!("eigen residual {}, orthogonality {}", sig_n(res, 3), sig_n(orth, 3)));
        Ok(t)
    }
}

fn parity_str(p: i8) -> &'static str {
    match p {
        1 => "even",
        -1 => "odd",
        _ => "mixed",
    }
}

// ---------------------------------------------------------------------------

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Secular,
    Dense,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BandsArgs {
    #[command(flatten)]
    pub tune: Tune,
    /// Number of Bloch momenta in [−π, π)
    #[arg(long, default_value_t = 128)]
    pub kpoints: usize,
    /// Harmonic window: hw, fw, or a range such as 1..2
    #[arg(long, default_value = "fw")]
    pub window: String,
    #[arg(long, value_enum, default_value_t = Method::Secular)]
    pub method: Method,
    /// Also write a JSON summary (band edges, flat bands, gaps) to this path
    #[arg(long)]
    #[serde(skip)]
    pub summary: Option<PathBuf>,
}

impl BandsArgs {
    pub const COLUMNS: &'static [&'static str] = &["k_index", "k", "band", "freq_GHz"];
    pub const UNITS: &'static str = "k in rad per unit cell; freq GHz";

    pub fn bands(&self, ctx: &Ctx) -> Result<(DeviceSpec, BandStructure)> {
        if self.kpoints == 0 {
            return Err(invalid("kpoints", "sweep grid is empty"));
        }
        let dev = self.tune.apply(ctx.device(), None)?;
        let method = match self.method {
            Method::Secular => BandMethod::Secular,
            Method::Dense => BandMethod::Dense,
        };
        let bs = bloch_bands(&dev, &k_grid(self.kpoints), window(&self.window)?, method, ctx.par)?;
        Ok((dev, bs))
    }

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        Ok(bands_table(&self.bands(ctx)?.1))
    }
}

pub fn bands_table(bs: &BandStructure) -> Table {
    let mut t = Table::new(BandsArgs::COLUMNS);
    for (ik, row) in bs.bands.iter().enumerate() {
        for (b, &w) in row.iter().enumerate() {
            t.rows.push(vec![ik.to_string(), sig(bs.k_grid[ik]), b.to_string(), sig(to_ghz(w))]);
        }
    }
    t.notes.push(format!("window {}, {} bands, {} momenta", bs.window.label(), bs.n_bands(), bs.k_grid.len()));
    t
}

/// Band edges, flat bands and gaps of a band structure.
pub fn bands_summary(dev: &DeviceSpec, bs: &BandStructure) -> Result<Value> {
    let model = TbModel::from_device(dev).ok();
    let edges: Vec<Value> = (0..bs.n_bands())
        .map(|b| {
            json!({
                "band": b,
                "min_GHz": num(to_ghz(bs.band_min(b))),
                "max_GHz": num(to_ghz(bs.band_max(b))),
                "width_MHz": num(to_mhz(bs.width(b))),
            })
        })
        .collect();
    let gap_list: Vec<Value> = gaps(bs)
        .iter()
        .map(|g| {
            json!({
                "below": g.below,
                "lower_GHz": num(to_ghz(g.lower_edge)),
                "upper_GHz": num(to_ghz(g.upper_edge)),
                "size_MHz": num(to_mhz(g.size)),
            })
        })
        .collect();
    let mut out = json!({
        "window": bs.window.label(),
        "kpoints": bs.k_grid.len(),
        "bands": edges,
        "gaps": gap_list,
        "t_MHz": Value::Null,
        "flat_bands": Value::Null,
        "gap_comparison": Value::Null,
    });
    if let Some(m) = model {
        out["t_MHz"] = num(to_mhz(m.t));
        out["omega_tilde_GHz"] = num(to_ghz(m.omega_tilde));
        if dev.boundary == cpw_lattice::device::Boundary::Periodic {
            let flat = detect_flat_bands(dev, bs, m.t, None)?;
            out["flat_bands"] = Value::Array(
                flat.iter()
                    .map(|f| {
                        json!({
                            "band": f.band,
                            "center_GHz": num(to_ghz(f.center)),
                            "bandwidth_MHz": num(to_mhz(f.bandwidth)),
                            "bandwidth_over_t": num(f.bandwidth / m.t),
                            "degeneracy": f.degeneracy,
                            "parity": f.parity.as_str(),
                            "participation_ratio": num(f.localization),
                            "marginal": f.marginal,
                        })
                    })
                    .collect(),
            );
        }
        if bs.window.j_lo == bs.window.j_hi {
            let cmp = compare_gaps(dev, bs, 1e-6 * m.t)?;
            out["gap_comparison"] = Value::Array(
                cmp.iter()
                    .map(|c| {
                        json!({
                            "below": c.below,
                            "tb_gap_MHz": num(to_mhz(c.tb_gap)),
                            "full_gap_MHz": num(to_mhz(c.full_gap)),
                            "opened": c.opened,
                        })
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DosMode {
    Fixed,
    Scaled,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DosArgs {
    #[arg(long = "tmin-MHz", default_value_t = 2.5)]
    pub tmin_mhz: f64,
    #[arg(long = "tmax-MHz", default_value_t = 250.0)]
    pub tmax_mhz: f64,
    #[arg(long, default_value_t = 60)]
    pub tsteps: usize,
    /// Logarithmic t spacing
    #[arg(long)]
    pub log: bool,
    #[arg(long, default_value = "fw")]
    pub window: String,
    /// fixed: energy axis in GHz; scaled: energy offsets from j·ω̃ in units of t
    #[arg(long = "window-mode", value_enum, default_value_t = DosMode::Scaled)]
    pub window_mode: DosMode,
    /// Lower end of the energy axis (GHz when fixed, units of t when scaled)
    #[arg(long, allow_negative_numbers = true)]
    pub emin: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub emax: Option<f64>,
    #[arg(long, default_value_t = 801)]
    pub esteps: usize,
    /// Gaussian broadening (MHz when fixed, units of t when scaled)
    #[arg(long)]
    pub broadening: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub kpoints: usize,
    #[arg(long = "omega-tilde-GHz", default_value_t = 5.0)]
    pub omega_tilde_ghz: f64,
    #[arg(long = "cc-prime-ratio", default_value_t = 0.5)]
    pub cc_prime_ratio: f64,
}

impl DosArgs {
    pub const COLUMNS: &'static [&'static str] = &["t_MHz", "energy_GHz", "offset_over_t", "dos_per_GHz", "sigma_MHz"];
    pub const UNITS: &'static str = "t MHz; energy GHz; offset in units of t; dos states per GHz per unit cell; sigma MHz";

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        if self.tsteps == 0 {
            return Err(invalid("tsteps", "sweep grid is empty"));
        }
        positive(self.tmin_mhz, "tmin-MHz")?;
        positive(self.tmax_mhz, "tmax-MHz")?;
        if self.tsteps > 1 && !(self.tmax_mhz > self.tmin_mhz) {
            return Err(invalid("tmax-MHz", "t grid must be increasing"));
        }
        if self.esteps < 2 {
            return Err(invalid("esteps", "energy grid needs at least two points"));
        }
        if self.kpoints == 0 {
            return Err(invalid("kpoints", "sweep grid is empty"));
        }
        let w = window(&self.window)?;
        let t_values: Vec<f64> = sweep(self.tmin_mhz, self.tmax_mhz, self.tsteps, self.log).into_iter().map(mhz).collect();
        let center = w.j_lo as f64 * ghz(self.omega_tilde_ghz);
        let reach = 4.0 * w.j_hi as f64 + 4.0;
        let (mode, lo, hi, broadening) = match self.window_mode {
            DosMode::Scaled => (WindowMode::Scaled, self.emin.unwrap_or(-reach), self.emax.unwrap_or(reach), self.broadening),
            DosMode::Fixed => {
                let tmax = mhz(self.tmax_mhz);
                (
                    WindowMode::Fixed,
                    self.emin.map_or(center - reach * tmax, ghz),
                    self.emax.map_or(center + reach * tmax, ghz),
                    self.broadening.map(mhz),
                )
            }
        };
        if !(hi > lo) {
            return Err(invalid("emax", "energy window is empty"));
        }
        let opts = DosOptions {
            window: w,
            mode,
            energies: sweep(lo, hi, self.esteps, false),
            broadening,
            n_k: self.kpoints,
            omega_tilde: ghz(self.omega_tilde_ghz),
            cc_prime_ratio: self.cc_prime_ratio,
        };
        let g = dos(&ctx.device(), &t_values, &opts, ctx.par)?;
        let mut t = Table::new(Self::COLUMNS);
        let per_ghz = ghz(1.0);
        for (it, &tv) in g.t_values.iter().enumerate() {
            for ie in 0..g.energies.len() {
                let e = g.energy(it, ie);
                t.rows.push(vec![
                    sig(to_mhz(tv)),
                    sig(to_ghz(e)),
                    sig((e - g.center) / tv),
                    sig(g.dos[it][ie] * per_ghz),
                    sig(to_mhz(g.sigma[it])),
                ]);
            }
        }
        t.notes.push(format!(
            "window {} centred at {} GHz, {} mode, {} bands per cell",
            w.label(),
            sig(to_ghz(g.center)),
            mode.as_str(),
            g.n_bands
        ));
        Ok(t)
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct TbCompareArgs {
    #[command(flatten)]
    pub tune: Tune,
    #[arg(long, default_value_t = 32)]
    pub kpoints: usize,
    /// Harmonic families to compare
    #[arg(long, default_value = "1,2")]
    pub harmonics: String,
}

impl TbCompareArgs {
    pub const COLUMNS: &'static [&'static str] = &[
        "j",
        "band",
        "tb_min_GHz",
        "tb_max_GHz",
        "full_min_GHz",
        "full_max_GHz",
        "max_abs_dev_MHz",
        "max_rel_dev",
        "rel_dev_over_t2",
        "width_ratio",
        "fitted_hopping_over_jt",
    ];
    pub const UNITS: &'static str = "freq GHz; abs deviation MHz; relative deviation dimensionless; t2 = (t/omega_tilde)^2";

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        if self.kpoints == 0 {
            return Err(invalid("kpoints", "sweep grid is empty"));
        }
        let harmonics: Vec<usize> = parse_list(&self.harmonics, "harmonics")?;
        let dev = self.tune.apply(ctx.device(), None)?;
        let rep = tb_deviation(&dev, &k_grid(self.kpoints), &harmonics, ctx.par)?;
        let t2 = (rep.t / rep.omega_tilde).powi(2);
        let mut t = Table::new(Self::COLUMNS);
        for h in &rep.harmonics {
            for b in &h.bands {
                t.rows.push(vec![
                    h.j.to_string(),
                    b.band.to_string(),
                    sig(to_ghz(b.tb_min)),
                    sig(to_ghz(b.tb_max)),
                    sig(to_ghz(b.full_min)),
                    sig(to_ghz(b.full_max)),
                    sig(to_mhz(b.max_abs_dev)),
                    sig(b.max_rel_dev),
                    sig(b.max_rel_dev / t2),
                    sig(h.width_ratio),
                    sig(h.fitted_hopping / (h.j as f64 * rep.t)),
                ]);
            }
        }
        t.notes.push(format!(
            "t = {} MHz, omega_tilde = {} GHz, max rel dev {} = {} (t/omega_tilde)^2",
            sig(to_mhz(rep.t)),
            sig(to_ghz(rep.omega_tilde)),
            sig(rep.max_rel_dev()),
            sig(rep.max_rel_dev() / t2)
        ));
        Ok(t)
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConvergeArgs {
    /// Mode cutoffs, strictly ascending
    #[arg(long = "M", default_value = "20,40,60,80,100")]
    pub m_list: String,
    /// Hopping t/2π (MHz); the device is retuned to it
    #[arg(long = "t-MHz", default_value_t = 250.0)]
    pub t_mhz: f64,
    #[arg(long = "omega-tilde-GHz", default_value_t = 5.0)]
    pub omega_tilde_ghz: f64,
    #[arg(long = "cc-prime-ratio", default_value_t = 0.5)]
    pub cc_prime_ratio: f64,
    #[arg(long, default_value_t = 16)]
    pub kpoints: usize,
    #[arg(long, default_value = "fw")]
    pub window: String,
}

impl ConvergeArgs {
    pub const COLUMNS: &'static [&'static str] =
        &["M", "mean_abs_dev_MHz", "std_abs_dev_MHz", "fit_rms_MHz", "fit_ok"];
    pub const UNITS: &'static str = "deviations from the 1/M extrapolation in MHz";

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        let m_list: Vec<usize> = parse_list(&self.m_list, "M")?;
        self.table_for(ctx, &m_list)
    }

    pub fn table_for(&self, ctx: &Ctx, m_list: &[usize]) -> Result<Table> {
        if self.kpoints == 0 {
            return Err(invalid("kpoints", "sweep grid is empty"));
        }
        let tune = Tune {
            t_mhz: Some(self.t_mhz),
            omega_tilde_ghz: self.omega_tilde_ghz,
            cc_prime_ratio: self.cc_prime_ratio,
        };
        let dev = tune.apply(ctx.device(), None)?;
        let tab = convergence_study(&dev, m_list, &k_grid(self.kpoints), window(&self.window)?, ctx.par)?;
        let mut t = Table::new(Self::COLUMNS);
        for (i, &m) in tab.m_list.iter().enumerate() {
            t.rows.push(vec![
                m.to_string(),
                sig(to_mhz(tab.mean_abs[i])),
                sig(to_mhz(tab.std_abs[i])),
                sig(to_mhz(tab.fit_rms)),
                tab.fit_ok().to_string(),
            ]);
        }
        t.notes.push(format!("t = {} MHz, window {}, {} momenta", sig(self.t_mhz), self.window, self.kpoints));
        Ok(t)
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct CouplingsArgs {
    #[command(flatten)]
    pub tune: Tune,
    /// Flux overrides, e.g. q1=0.21,q2=0.3 (`all=` applies to every qubit)
    #[arg(long)]
    pub flux: Option<String>,
    /// Qubits to tabulate (labels or indices); default all
    #[arg(long)]
    pub qubits: Option<String>,
    /// Skip the flat-band catalog used for the `flatband` column
    #[arg(long)]
    pub no_flat_bands: bool,
}

impl CouplingsArgs {
    pub const COLUMNS: &'static [&'static str] = &["qubit", "mode_index", "mode_freq_GHz", "g_MHz", "flatband", "parity"];
    pub const UNITS: &'static str = "freq GHz; g MHz (g/2π)";

    fn resolve(dev: &DeviceSpec, name: &str, path: &str) -> Result<usize> {
        dev.transmon_by_name(name).ok_or_else(|| invalid(path, format!("no transmon named '{name}'")))
    }

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        let dev = self.tune.apply(ctx.device(), None)?;
        let qubits: Vec<usize> = match &self.qubits {
            Some(s) => s.split(',').map(|n| Self::resolve(&dev, n.trim(), "qubits")).collect::<Result<_>>()?,
            None => (0..dev.transmons.len()).collect(),
        };
        if qubits.is_empty() {
            return Err(invalid("qubits", "device has no transmons"));
        }
        let mut flux = vec![None; qubits.len()];
        if let Some(spec) = &self.flux {
            for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (name, v) =
                    item.split_once('=').ok_or_else(|| invalid("flux", format!("expected name=value, got '{item}'")))?;
                let v: f64 = v.trim().parse().map_err(|_| invalid("flux", format!("bad flux '{v}'")))?;
                if name.trim().eq_ignore_ascii_case("all") {
                    flux.iter_mut().for_each(|f| *f = Some(v));
                } else {
                    let q = Self::resolve(&dev, name.trim(), "flux")?;
                    for (i, &qq) in qubits.iter().enumerate() {
                        if qq == q {
                            flux[i] = Some(v);
                        }
                    }
                }
            }
        }
        let modes = solve_modes(&build_matrices(&dev)?)?;
        let flat = if self.no_flat_bands { Vec::new() } else { flat_band_catalog(&dev) };
        let tab = coupling_table(&dev, &modes, &qubits, &flux, &flat)?;
        let mut t = Table::new(Self::COLUMNS);
        for e in &tab.entries {
            t.rows.push(vec![
                dev.transmon_name(e.qubit),
                e.mode.to_string(),
                sig(to_ghz(e.freq)),
                sig(to_mhz(e.g)),
                e.flatband.to_string(),
                parity_str(e.parity).into(),
            ]);
        }
        for (q, p) in tab.qubits.iter().zip(&tab.params) {
            t.notes.push(format!(
                "{}: Omega = {} GHz, alpha = {} MHz, E_J = {} GHz",
                dev.transmon_name(*q),
                sig(to_ghz(p.omega_q)),
                sig(to_mhz(p.alpha)),
                sig(to_ghz(p.ej))
            ));
        }
        Ok(t)
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct FwmArgs {
    /// Qubit frequency Ω/2π (GHz); taken from --qubit when omitted
    #[arg(long = "omega-q")]
    pub omega_q: Option<f64>,
    /// Monitor mode frequency (GHz)
    #[arg(long = "omega-m")]
    pub omega_m: f64,
    /// Wave-mixing mode frequency (GHz)
    #[arg(long = "omega-w")]
    pub omega_w: f64,
    /// Anharmonicity α/2π (GHz, positive); taken from --qubit when omitted
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "g-qm-MHz")]
    pub g_qm_mhz: f64,
    #[arg(long = "g-qw-MHz")]
    pub g_qw_mhz: f64,
    /// Pump amplitude E_p/2π (MHz)
    #[arg(long = "ep-MHz")]
    pub ep_mhz: f64,
    /// Pump frequency (GHz); defaults to the four-wave-mixing resonance
    #[arg(long = "omega-p")]
    pub omega_p: Option<f64>,
    /// Also run the exact-diagonalization oracle
    #[arg(long)]
    pub oracle: bool,
    /// Oracle Fock cutoffs n_q,n_w,n_m
    #[arg(long, default_value = "3,3,3")]
    pub cutoffs: String,
    /// Device transmon providing Ω and α
    #[arg(long)]
    pub qubit: Option<String>,
    /// Flux of --qubit (overrides the device value)
    #[arg(long)]
    pub flux: Option<f64>,
}

pub struct FwmResult {
    pub problem: FwmProblem,
    pub omega_p_star: f64,
    pub tls: f64,
    pub transmon: f64,
    pub small_alpha: f64,
    pub oracle: Option<(f64, f64, (f64, f64))>,
    pub flags: Vec<&'static str>,
}

impl FwmArgs {
    pub const COLUMNS: &'static [&'static str] = &[
        "omega_q_GHz",
        "omega_m_GHz",
        "omega_w_GHz",
        "omega_p_GHz",
        "omega_p_star_GHz",
        "amp_tls_MHz",
        "amp_transmon_MHz",
        "amp_small_alpha_MHz",
        "oracle_MHz",
        "validity_flags",
    ];
    pub const UNITS: &'static str = "frequencies GHz; amplitudes, couplings and drive MHz (divided by 2π)";

    pub fn compute(&self, ctx: &Ctx) -> Result<FwmResult> {
        let (mut omega_q, mut alpha) = (self.omega_q.map(ghz), self.alpha.map(ghz));
        if let Some(name) = &self.qubit {
            let dev = ctx.device();
            let q = dev.transmon_by_name(name).ok_or_else(|| invalid("qubit", format!("no transmon named '{name}'")))?;
            let mut spec = dev.transmons[q].clone();
            if let Some(f) = self.flux {
                spec.flux = f;
            }
            let p = transmon_params(&spec)?;
            omega_q = omega_q.or(Some(p.omega_q));
            alpha = alpha.or(Some(p.alpha));
        } else if self.flux.is_some() {
            return Err(invalid("flux", "--flux needs --qubit"));
        }
        let omega_q = omega_q.ok_or_else(|| invalid("omega-q", "give --omega-q or --qubit"))?;
        let alpha = alpha.ok_or_else(|| invalid("alpha", "give --alpha or --qubit"))?;
        let (omega_m, omega_w) = (ghz(self.omega_m), ghz(self.omega_w));
        let star = resonant_pump(omega_q, omega_m, omega_w);
        let p = FwmProblem {
            omega_q,
            omega_m,
            omega_w,
            omega_p: self.omega_p.map_or(star, ghz),
            g_qm: mhz(self.g_qm_mhz),
            g_qw: mhz(self.g_qw_mhz),
            alpha,
            ep: mhz(self.ep_mhz),
        };
        let tls = fwm_amplitude_tls(&p)?;
        let tr = fwm_amplitude_transmon(&p)?;
        let sa = fwm_amplitude_small_alpha(&p)?;
        let oracle = if self.oracle {
            let c: Vec<usize> = parse_list(&self.cutoffs, "cutoffs")?;
            if c.len() != 3 {
                return Err(invalid("cutoffs", "expected three cutoffs n_q,n_w,n_m"));
            }
            let r = fwm_oracle_exact(&p, (c[0], c[1], c[2]))?;
            Some((r.overlap, r.coeff_200, r.assignment))
        } else {
            None
        };
        Ok(FwmResult {
            problem: p,
            omega_p_star: star,
            tls: tls.value,
            transmon: tr.value,
            small_alpha: sa.value,
            oracle,
            flags: tr.validity.names(),
        })
    }

    pub fn json(&self, ctx: &Ctx) -> Result<Value> {
        let r = self.compute(ctx)?;
        let p = &r.problem;
        Ok(json!({
            "inputs": {
                "omega_q_GHz": num(to_ghz(p.omega_q)),
                "omega_m_GHz": num(to_ghz(p.omega_m)),
                "omega_w_GHz": num(to_ghz(p.omega_w)),
                "omega_p_GHz": num(to_ghz(p.omega_p)),
                "alpha_GHz": num(to_ghz(p.alpha)),
                "g_qm_MHz": num(to_mhz(p.g_qm)),
                "g_qw_MHz": num(to_mhz(p.g_qw)),
                "ep_MHz": num(to_mhz(p.ep)),
            },
            "omega_p_star_GHz": num(to_ghz(r.omega_p_star)),
            "mismatch_MHz": num(to_mhz(p.mismatch())),
            "amp_tls": num(to_mhz(r.tls)),
            "amp_transmon": num(to_mhz(r.transmon)),
            "amp_small_alpha": num(to_mhz(r.small_alpha)),
            "transmon_over_tls": num(r.transmon / r.tls),
            "oracle": r.oracle.map(|(o, c, a)| json!({
                "overlap": num(to_mhz(o)),
                "coeff_200": num(c),
                "assignment": [num(a.0), num(a.1)],
            })),
            "validity_flags": r.flags,
        }))
    }

    pub fn table(&self, ctx: &Ctx) -> Result<Table> {
        let r = self.compute(ctx)?;
        let p = &r.problem;
        let mut t = Table::new(Self::COLUMNS);
        t.rows.push(vec![
            sig(to_ghz(p.omega_q)),
            sig(to_ghz(p.omega_m)),
            sig(to_ghz(p.omega_w)),
            sig(to_ghz(p.omega_p)),
            sig(to_ghz(r.omega_p_star)),
            sig(to_mhz(r.tls)),
            sig(to_mhz(r.transmon)),
            sig(to_mhz(r.small_alpha)),
            r.oracle.map_or(String::new(), |o| sig(to_mhz(o.0))),
            r.flags.join(" "),
        ]);
        Ok(t)
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Clone, Serialize)]
pub struct SaturationArgs {
    /// Drive grid E_p/2π in MHz: a:b:n[:log|:lin] (log by default) or a list
    #[arg(long, default_value = "0.001:10:41")]
    pub sweep: String,
    /// Anharmonicity α/2π (MHz)
    #[arg(long = "alpha-MHz", default_value_t = 125.0)]
    pub alpha_mhz: f64,
    #[arg(long = "gamma-e-MHz", default_value_t = 1.0)]
    pub gamma_e_mhz: f64,
    #[arg(long = "gamma-f-MHz", default_value_t = 1.0)]
    pub gamma_f_mhz: f64,
    /// Pump detuning ω_p − ω_q (MHz)
    #[arg(long = "delta-MHz", default_value_t = 0.0, allow_negative_numbers = true)]
    pub delta_mhz: f64,
    /// Pump at the two-photon g–f resonance (detuning −α/2)
    #[arg(long)]
    pub two_photon: bool,
}

impl SaturationArgs {
    pub const COLUMNS: &'static [&'static str] = &["ep_MHz", "p_ee", "p_ff", "p_ee_fit", "p_ff_fit"];
    pub const UNITS: &'static str = "drive, detuning and decay rates MHz (divided by 2π); populations dimensionless";

    pub fn table(&self, _ctx: &Ctx) -> Result<Table> {
        let drive = parse_grid(&self.sweep, true, "sweep")?;
        if drive.iter().any(|&e| e < 0.0) {
            return Err(invalid("sweep", "drive amplitudes must be non-negative"));
        }
        let ladder = Ladder {
            delta: if self.two_photon { -0.5 * self.alpha_mhz } else { self.delta_mhz },
            alpha: self.alpha_mhz,
            gamma_e: positive(self.gamma_e_mhz, "gamma-e-MHz")?,
            gamma_f: positive(self.gamma_f_mhz, "gamma-f-MHz")?,
        };
        let c = lindblad_curve(&drive, &ladder)?;
        let mut t = Table::new(Self::COLUMNS);
        let fit = |f: Option<(f64, f64)>, e: f64| f.map_or(String::new(), |(a, b)| sig(p_sat(e, a, b)));
        for (i, &e) in drive.iter().enumerate() {
            t.rows.push(vec![
                sig(e),
                sig(c.p_ee[i]),
                sig(c.p_ff[i]),
                fit(c.fit_ee, e),
                fit(c.fit_ff, raman_rate(e, self.alpha_mhz)),
            ]);
        }
        let show = |f: Option<(f64, f64)>| f.map_or("n/a".to_string(), |(a, b)| format!("A = {}, B = {}", sig(a), sig(b)));
        t.notes.push(format!("P_ee fit (E_p): {}", show(c.fit_ee)));
        t.notes.push(format!("P_ff fit (Raman rate): {}", show(c.fit_ff)));
        let lo = drive.iter().cloned().filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
        let low: Vec<usize> = (0..drive.len()).filter(|&i| drive[i] > 0.0 && drive[i] <= 10.0 * lo).collect();
        let pick = |v: &[f64]| low.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let d = pick(&drive);
        let slope = |v: &[f64]| power_slope(&d, &pick(v)).map_or("n/a".to_string(), sig);
        t.notes.push(format!("low-power log-log slopes vs pump power: P_ee {}, P_ff {}", slope(&c.p_ee), slope(&c.p_ff)));
        Ok(t)
    }
}
