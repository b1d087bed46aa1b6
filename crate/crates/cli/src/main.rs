mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use cpw_lattice::bands::{run_ordered, Parallelism};
use cpw_lattice::circuit::{build_matrices, write_matrix_csv};
use cpw_lattice::device::{parse_device, LoadOptions};
use cpw_lattice::Error;

use commands::*;
use output::{config_hash, render_json, sha256_hex, sig, write_text, Meta, Table};

/// Multimode circuit model of coplanar-waveguide resonator lattices.
#[derive(Parser, Debug, Serialize)]
#[command(name = "cpwlat", version, about)]
struct Cli {
    /// Device JSON file (default: the built-in six-site rhombus chain)
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    /// Output file (default: stdout)
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this
    #[arg(long, global = true, default_value_t = 1)]
    #[serde(skip)]
    parallel: usize,
    /// Warn about unknown keys in the device file instead of failing
    #[arg(long, global = true)]
    lenient: bool,
    /// Abort a sweep at the first failing grid point
    #[arg(long, global = true)]
    fail_fast: bool,
    /// Write a gnuplot script next to the CSV output (needs --out)
    #[arg(long, global = true)]
    gnuplot: bool,
    /// Override the mode cutoff M of every resonator
    #[arg(long, global = true)]
    cutoff: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Cmd {
    /// Normal modes of the finite lattice
    Modes(ModesArgs),
    /// Bloch band structure
    Bands(BandsArgs),
    /// Density of states over a sweep of the hopping t
    Dos(DosArgs),
    /// Full circuit against the tight-binding model
    TbCompare(TbCompareArgs),
    /// Band energies against the mode cutoff M
    Converge(ConvergeArgs),
    /// Transmon–mode coupling table
    Couplings(CouplingsArgs),
    /// Four-wave-mixing resonance and amplitudes
    Fwm(FwmArgs),
    /// Driven-ladder saturation curves
    Saturation(SaturationArgs),
    /// Run another subcommand over a parameter grid
    Sweep(SweepArgs),
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Inner {
    Modes(ModesArgs),
    Bands(BandsArgs),
    Dos(DosArgs),
    TbCompare(TbCompareArgs),
    Converge(ConvergeArgs),
    Couplings(CouplingsArgs),
    Fwm(FwmArgs),
    Saturation(SaturationArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
enum Axis {
    /// Hopping t/2π in MHz
    #[value(name = "t")]
    T,
    /// Transmon flux (units of the flux quantum)
    #[value(name = "flux")]
    Flux,
    /// Monitor frequency in GHz
    #[value(name = "omega_m")]
    OmegaM,
    /// Mode cutoff
    #[value(name = "M")]
    M,
}

impl Axis {
    fn column(self) -> &'static str {
        match self {
            Axis::T => "t_MHz",
            Axis::Flux => "flux",
            Axis::OmegaM => "omega_m_GHz",
            Axis::M => "M",
        }
    }
}

#[derive(clap::Args, Debug, Clone, Serialize)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// a:b:n[:log|:lin] or a comma-separated list
    #[arg(long)]
    grid: String,
    /// Qubit whose flux is swept (default: every qubit of the inner command)
    #[arg(long)]
    qubit: Option<String>,
    #[command(subcommand)]
    inner: Inner,
}

impl Inner {
    fn name(&self) -> &'static str {
        match self {
            Inner::Modes(_) => "modes",
            Inner::Bands(_) => "bands",
            Inner::Dos(_) => "dos",
            Inner::TbCompare(_) => "tb-compare",
            Inner::Converge(_) => "converge",
            Inner::Couplings(_) => "couplings",
            Inner::Fwm(_) => "fwm",
            Inner::Saturation(_) => "saturation",
        }
    }

    fn columns(&self) -> &'static [&'static str] {
        match self {
            Inner::Modes(_) => ModesArgs::COLUMNS,
            Inner::Bands(_) => BandsArgs::COLUMNS,
            Inner::Dos(_) => DosArgs::COLUMNS,
            Inner::TbCompare(_) => TbCompareArgs::COLUMNS,
            Inner::Converge(_) => ConvergeArgs::COLUMNS,
            Inner::Couplings(_) => CouplingsArgs::COLUMNS,
            Inner::Fwm(_) => FwmArgs::COLUMNS,
            Inner::Saturation(_) => SaturationArgs::COLUMNS,
        }
    }

    fn units(&self) -> &'static str {
        match self {
            Inner::Modes(_) => ModesArgs::UNITS,
            Inner::Bands(_) => BandsArgs::UNITS,
            Inner::Dos(_) => DosArgs::UNITS,
            Inner::TbCompare(_) => TbCompareArgs::UNITS,
            Inner::Converge(_) => ConvergeArgs::UNITS,
            Inner::Couplings(_) => CouplingsArgs::UNITS,
            Inner::Fwm(_) => FwmArgs::UNITS,
            Inner::Saturation(_) => SaturationArgs::UNITS,
        }
    }

    fn table(&self, ctx: &Ctx) -> cpw_lattice::Result<Table> {
        match self {
            Inner::Modes(a) => a.table(ctx),
            Inner::Bands(a) => a.table(ctx),
            Inner::Dos(a) => a.table(ctx),
            Inner::TbCompare(a) => a.table(ctx),
            Inner::Converge(a) => a.table(ctx),
            Inner::Couplings(a) => a.table(ctx),
            Inner::Fwm(a) => a.table(ctx),
            Inner::Saturation(a) => a.table(ctx),
        }
    }

    /// The inner command at grid value `v`, plus a cutoff override for the
    /// M axis.
    fn at(&self, axis: Axis, v: f64, qubit: Option<&str>) -> cpw_lattice::Result<(Inner, Option<usize>)> {
        let mut inner = self.clone();
        let na = || {
            Error::validation("axis", format!("axis {} does not apply to {}", axis.column(), self.name()))
        };
        match (axis, &mut inner) {
            (Axis::T, Inner::Modes(a)) => a.tune.t_mhz = Some(v),
            (Axis::T, Inner::Bands(a)) => a.tune.t_mhz = Some(v),
            (Axis::T, Inner::TbCompare(a)) => a.tune.t_mhz = Some(v),
            (Axis::T, Inner::Couplings(a)) => a.tune.t_mhz = Some(v),
            (Axis::T, Inner::Converge(a)) => a.t_mhz = v,
            (Axis::Flux, Inner::Couplings(a)) => {
                let item = format!("{}={v:e}", qubit.unwrap_or("all"));
                a.flux = Some(match &a.flux {
                    Some(f) => format!("{f},{item}"),
                    None => item,
                });
            }
            (Axis::Flux, Inner::Fwm(a)) => {
                if let Some(q) = qubit {
                    a.qubit = Some(q.to_string());
                }
                if a.qubit.is_none() || a.omega_q.is_some() {
                    return Err(Error::validation("axis", "flux sweeps of fwm need --qubit and no --omega-q"));
                }
                a.flux = Some(v);
            }
            (Axis::OmegaM, Inner::Fwm(a)) => a.omega_m = v,
            (Axis::M, Inner::Modes(_) | Inner::Bands(_) | Inner::TbCompare(_) | Inner::Couplings(_)) => {
                return Ok((inner, Some(cutoff_value(v)?)));
            }
            _ => return Err(na()),
        }
        Ok((inner, None))
    }
}

fn cutoff_value(v: f64) -> cpw_lattice::Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e6 {
        Ok(v as usize)
    } else {
        Err(Error::validation("grid", format!("mode cutoff must be a positive integer, got {v}")))
    }
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Io { path: PathBuf, err: std::io::Error },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), err }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_config() => 3,
            _ => 2,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message, path) = match self {
            CliError::Core(e) => {
                let path = match e {
                    Error::Validation { path, .. } | Error::DanglingReference { path, .. } => Some(path.clone()),
                    _ => None,
                };
                (e.kind().to_string(), e.to_string(), path)
            }
            CliError::Io { path, err } => {
                ("IoError".to_string(), format!("{}: {err}", path.display()), Some(path.display().to_string()))
            }
        };
        json!({"error": {"kind": kind, "message": message, "path": path, "exit_code": self.exit_code()}})
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.to_json()).unwrap_or_default());
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let err = CliError::Core(Error::validation("arguments", first));
            return fail(&err);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.parallel == 0 {
        return Err(Error::validation("parallel", "need at least one thread").into());
    }
    if cli.cutoff == Some(0) {
        return Err(Error::validation("cutoff", "mode cutoff must be at least 1").into());
    }
    let (device, device_hash) = match &cli.device {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let (d, _) = parse_device(&text, LoadOptions { lenient: cli.lenient })?;
            (Some(d), sha256_hex(text.as_bytes()))
        }
        None => (None, format!("builtin:rhombus_chain:M{BUILTIN_CUTOFF}")),
    };
    let config = json!({"args": serde_json::to_value(cli).unwrap_or(Value::Null), "device": device_hash});
    let hash = config_hash(&config);
    let ctx = Ctx { device, cutoff: cli.cutoff, par: Parallelism::threads(cli.parallel) };
    let meta = |command: &str, units: &str| Meta { command: command.into(), config_hash: hash.clone(), units: units.into() };
    let out = cli.out.as_deref();

    let (name, table) = match &cli.cmd {
        Cmd::Fwm(a) => {
            let text = render_json(&meta("fwm", FwmArgs::UNITS), a.json(&ctx)?);
            return write_text(out, &text).map_err(|e| CliError::io(out.unwrap_or(Path::new("-")), e));
        }
        Cmd::Modes(a) => {
            let t = a.table(&ctx)?;
            if let Some(prefix) = &a.dump_matrices {
                dump_matrices(&a.device(&ctx)?, prefix, &meta("modes", "capacitance F; inverse inductance 1/H"))?;
            }
            ("modes", (t, ModesArgs::UNITS.to_string()))
        }
        Cmd::Bands(a) => {
            let (dev, bs) = a.bands(&ctx)?;
            if let Some(p) = &a.summary {
                let s = bands_summary(&dev, &bs)?;
                let m = meta("bands", "freq GHz; widths and gaps MHz; bandwidth_over_t dimensionless");
                write_text(Some(p), &render_json(&m, s)).map_err(|e| CliError::io(p, e))?;
            }
            ("bands", (bands_table(&bs), BandsArgs::UNITS.to_string()))
        }
        Cmd::Dos(a) => ("dos", (a.table(&ctx)?, DosArgs::UNITS.to_string())),
        Cmd::TbCompare(a) => ("tb-compare", (a.table(&ctx)?, TbCompareArgs::UNITS.to_string())),
        Cmd::Converge(a) => ("converge", (a.table(&ctx)?, ConvergeArgs::UNITS.to_string())),
        Cmd::Couplings(a) => ("couplings", (a.table(&ctx)?, CouplingsArgs::UNITS.to_string())),
        Cmd::Saturation(a) => ("saturation", (a.table(&ctx)?, SaturationArgs::UNITS.to_string())),
        Cmd::Sweep(s) => ("sweep", run_sweep(s, &ctx, cli.fail_fast)?),
    };
    let (table, units) = table;
    let m = meta(name, &units);
    match out {
        Some(p) => {
            write_text(Some(p), &table.render(&m)).map_err(|e| CliError::io(p, e))?;
            if cli.gnuplot {
                let gp = gnuplot_path(p);
                write_text(Some(&gp), &gnuplot_script(&cli.cmd, p, &m)).map_err(|e| CliError::io(&gp, e))?;
            }
            Ok(())
        }
        None => {
            if cli.gnuplot {
                return Err(Error::validation("gnuplot", "--gnuplot needs --out").into());
            }
            write_text(None, &table.render(&m)).map_err(|e| CliError::io(Path::new("-"), e))
        }
    }
}

fn dump_matrices(dev: &cpw_lattice::device::DeviceSpec, prefix: &Path, meta: &Meta) -> Result<(), CliError> {
    let mats = build_matrices(dev)?;
    let cap = PathBuf::from(format!("{}.cap.csv", prefix.display()));
    let mut buf = meta.csv_header(&[]).into_bytes();
    write_matrix_csv(&mut buf, &mats.cap).map_err(|e| CliError::io(&cap, e))?;
    std::fs::write(&cap, buf).map_err(|e| CliError::io(&cap, e))?;
    let ind = PathBuf::from(format!("{}.ind_inv.csv", prefix.display()));
    let mut text = meta.csv_header(&[]);
    text.push_str("row,col,value\n");
    for (i, v) in mats.ind_inv.iter().enumerate() {
        text.push_str(&format!("{i},{i},{v:.16e}\n"));
    }
    std::fs::write(&ind, text).map_err(|e| CliError::io(&ind, e))?;
    Ok(())
}

fn run_sweep(s: &SweepArgs, ctx: &Ctx, fail_fast: bool) -> Result<(Table, String), CliError> {
    let grid = parse_grid(&s.grid, false, "grid")?;
    if s.qubit.is_some() && s.axis != Axis::Flux {
        return Err(Error::validation("qubit", "--qubit only applies to flux sweeps").into());
    }
    // applicability is a configuration property: check it before any work
    if !(s.axis == Axis::M && matches!(s.inner, Inner::Converge(_))) {
        s.inner.at(s.axis, grid[0], s.qubit.as_deref())?;
    }
    let mut table = Table::new(&[s.axis.column()]);
    table.columns.extend(s.inner.columns().iter().map(|c| c.to_string()));
    table.columns.push("errors".into());
    table.notes.push(format!("sweep of {} over {} = {} ({} points)", s.inner.name(), s.axis.column(), s.grid, grid.len()));
    let width = s.inner.columns().len();

    let results: Vec<cpw_lattice::Result<Table>> = if let (Axis::M, Inner::Converge(c)) = (s.axis, &s.inner) {
        let m: Vec<usize> = grid.iter().map(|&v| cutoff_value(v)).collect::<cpw_lattice::Result<_>>()?;
        match c.table_for(ctx, &m) {
            Ok(t) => t.rows.into_iter().map(|r| Ok(Table { rows: vec![r], ..Default::default() })).collect(),
            Err(e) => grid.iter().map(|_| Err(e.clone())).collect(),
        }
    } else {
        let inner_ctx = Ctx { par: Parallelism::serial(), ..ctx.clone() };
        run_ordered(ctx.par, &grid, |&v| {
            Ok(s.inner.at(s.axis, v, s.qubit.as_deref()).and_then(|(inner, cutoff)| {
                let c = Ctx { cutoff: cutoff.or(inner_ctx.cutoff), ..inner_ctx.clone() };
                inner.table(&c)
            }))
        })?
    };

    for (v, r) in grid.iter().zip(results) {
        let label = if s.axis == Axis::M { format!("{}", *v as usize) } else { sig(*v) };
        match r {
            Ok(t) => {
                for row in t.rows {
                    let mut full = vec![label.clone()];
                    full.extend(row);
                    full.push(String::new());
                    table.rows.push(full);
                }
            }
            Err(e) => {
                if fail_fast {
                    return Err(e.into());
                }
                let mut full = vec![label];
                full.extend(std::iter::repeat(String::new()).take(width));
                full.push(format!("{}: {e}", e.kind()));
                table.rows.push(full);
            }
        }
    }
    let units = format!("{}; axis {}", s.inner.units(), s.axis.column());
    Ok((table, units))
}

fn gnuplot_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".gp");
    PathBuf::from(s)
}

fn gnuplot_script(cmd: &Cmd, csv: &Path, meta: &Meta) -> String {
    let file = csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let body = match cmd {
        Cmd::Modes(_) => "set xlabel 'mode index'\nset ylabel 'frequency (GHz)'\nplot f using 1:2 with points notitle\n".to_string(),
        Cmd::Bands(_) => "set xlabel 'k'\nset ylabel 'frequency (GHz)'\nplot f using 2:4 with points pt 7 ps 0.3 notitle\n".to_string(),
        Cmd::Dos(_) => "set view map\nset logscale x\nset xlabel 't (MHz)'\nset ylabel 'offset / t'\nsplot f using 1:3:4 with points pt 5 ps 0.5 palette notitle\n".to_string(),
        Cmd::TbCompare(_) => "set xlabel 'band'\nset ylabel 'max relative deviation'\nplot f using 2:8 with linespoints title columnhead(8)\n".to_string(),
        Cmd::Converge(_) => "set xlabel 'M'\nset ylabel 'mean |E(M) - E_inf| (MHz)'\nset logscale xy\nplot f using 1:2 with linespoints notitle\n".to_string(),
        Cmd::Couplings(_) => "set xlabel 'mode frequency (GHz)'\nset ylabel 'g (MHz)'\nplot f using 3:4 with impulses notitle\n".to_string(),
        Cmd::Saturation(_) => "set logscale x\nset xlabel 'E_p (MHz)'\nset ylabel 'population'\nplot f using 1:2 with lines title 'P_ee', f using 1:3 with lines title 'P_ff'\n".to_string(),
        Cmd::Fwm(_) => String::new(),
        Cmd::Sweep(_) => "set xlabel columnhead(1)\nplot f using 1:2 with points notitle\n".to_string(),
    };
    format!(
        "# {} {}\n# config_sha256: {}\nset datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\nf = '{}'\n{}",
        output::TOOL,
        output::VERSION,
        meta.config_hash,
        file,
        body
    )
}
