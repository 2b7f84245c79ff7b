//! `eitsim` command line: run, analyze, compare, constants, template.
//!
//! Exit codes: 0 ok, 1 config, 2 numerical divergence, 3 I/O,
//! 4 comparison gate failed, 5 analysis error.

use crate::diagnostics::{analyze, cross_overlap, extrema, first_below, fit_damped_cosine, zero_crossings, DiagnosticRecord};
use crate::effective::{run_effective, EffectiveConfig};
use crate::field::{ComplexField2D, Mesh};
use crate::io::{
    export_intensity, export_timeseries, load_config, read_series, template, IoError, RunConfig, ScenarioKind, SeriesWriter,
    Snapshot,
};
use crate::obe::{run_with, ObeError};
use crate::series::TimeSeries;
use crate::states::{landau_profile, make_basis, qho_profile};
use clap::{Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "eitsim", version, about = "Optical-Bloch simulator for synthetic gauge potentials on dark-state polaritons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate a scenario and write snapshot series plus diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = SolverChoice::Obe)]
        solver: SolverChoice,
        /// Output directory (default: output.dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set scenario.n=2` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Project a stored series onto the scenario basis and check it against closed forms.
    Analyze {
        #[arg(long)]
        series: PathBuf,
        /// Config of the run (default: config.cfg inside the series).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        basis_max: Option<usize>,
    },
    /// Overlap |<a|b>|² of two series frame by frame.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        min_overlap: f64,
        /// Window start (s); default: first common time.
        #[arg(long)]
        from: Option<f64>,
        /// Window end (s); default: last common time.
        #[arg(long)]
        to: Option<f64>,
        /// CSV path (default: overlap.csv next to `a`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the derived constants for a config.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a commented config.
    Template {
        #[arg(long, value_enum, default_value_t = TemplateKind::Landau)]
        kind: TemplateKind,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Obe,
    Effective,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Landau,
    Qho,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TemplateKind {
    Landau,
    LandauOffset,
    Qho,
    NullUniform,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Divergence(String),
    Io(String),
    Gate(String),
    Analysis(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Divergence(_) => 2,
            CliError::Io(_) => 3,
            CliError::Gate(_) => 4,
            CliError::Analysis(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Divergence(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Gate(m) => write!(f, "check failed: {m}"),
            CliError::Analysis(m) => write!(f, "analysis error: {m}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Config(c) => CliError::Config(c.to_string()),
            IoError::Io(m) => CliError::Io(m),
            other => CliError::Io(other.to_string()),
        }
    }
}

fn analysis<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Analysis(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    crate::init_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("eitsim: {e}");
            e.code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, solver, out, set } => cmd_run(&config, solver, out.as_deref(), &set),
        Command::Analyze { series, config, mode, basis_max } => {
            let checks = cmd_analyze(&series, config.as_deref(), mode, basis_max)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(())
        }
        Command::Compare { a, b, min_overlap, from, to, out } => cmd_compare(&a, &b, min_overlap, from, to, out.as_deref()),
        Command::Constants { config } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
            let cfg = load_config(&text).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{}", constants_table(&cfg)?);
            Ok(())
        }
        Command::Template { kind } => {
            let kind = match kind {
                TemplateKind::Landau => ScenarioKind::Landau,
                TemplateKind::LandauOffset => ScenarioKind::LandauOffset,
                TemplateKind::Qho => ScenarioKind::Qho,
                TemplateKind::NullUniform => ScenarioKind::NullUniform,
            };
            print!("{}", template(kind));
            Ok(())
        }
    }
}

/// Config text with `key=value` overrides applied (existing lines for the
/// key are dropped, the override appended).
pub fn apply_overrides(text: &str, set: &[String]) -> Result<String, CliError> {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for s in set {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        let k = k.trim();
        lines.retain(|l| l.split('#').next().and_then(|b| b.split_once('=')).is_none_or(|(key, _)| key.trim() != k));
        lines.push(format!("{k} = {}", v.trim()));
    }
    Ok(lines.join("\n") + "\n")
}

pub fn constants_table(cfg: &RunConfig) -> Result<String, CliError> {
    let c = cfg.consts().map_err(|e| CliError::Config(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "eta      {:.6e} m^-1", c.eta);
    let _ = writeln!(s, "m        {:.6e} kg", c.mass);
    let _ = writeln!(s, "omega_B  {:.6e} rad/s", c.omega_b);
    let _ = writeln!(s, "l_B      {:.6e} m", c.l_b);
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
    let _ = writeln!(s, "l_E      {} m", opt(c.l_e));
    let _ = writeln!(s, "Omega_A  {} rad/s", opt(c.omega_a));
    let _ = writeln!(s, "D_lll    {:.6e} m^-2", c.d_lll);
    let _ = writeln!(s, "nu       {}", opt(c.nu_filling));
    Ok(s)
}

fn cfg_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Interval between stored OBE snapshots.
fn snapshot_interval(cfg: &RunConfig) -> f64 {
    cfg.output.snapshot_stride as f64 * cfg.grid.dt
}

/// First OBE snapshot time at or after the gauge stage switches on; both
/// solvers are compared from here.
pub fn handoff_time(cfg: &RunConfig) -> Result<f64, CliError> {
    let onset = cfg.schedule().map_err(cfg_err)?.gauge_onset();
    let h = snapshot_interval(cfg);
    Ok((onset / h - 1e-9).ceil() * h)
}

fn effective_mesh(cfg: &RunConfig) -> Mesh {
    let m = cfg.grid.mesh();
    match cfg.scenario.kind {
        ScenarioKind::Qho => Mesh::line(m.nx, m.dx, m.x_min),
        _ => m,
    }
}

fn effective_config(cfg: &RunConfig) -> EffectiveConfig {
    let mut e = cfg.effective;
    let ratio = snapshot_interval(cfg) / e.dt;
    if (ratio - ratio.round()).abs() < 1e-6 && ratio >= 1.0 {
        e.snapshot_stride = ratio.round() as usize;
    }
    e
}

fn cmd_run(config: &Path, solver: SolverChoice, out: Option<&Path>, set: &[String]) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
    let text = apply_overrides(&text, set)?;
    let cfg = load_config(&text).map_err(cfg_err)?;
    let report = crate::model::validate_params(&cfg.params, &cfg.grid);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.is_ok() {
        return Err(CliError::Config(report.violations.join("; ")));
    }
    let sc = cfg.scenario().map_err(cfg_err)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write_file(&out.join("config.cfg"), &cfg.to_text())?;
    let t_hand = handoff_time(&cfg)?;

    let mut handoff: Option<ComplexField2D> = None;
    if solver != SolverChoice::Effective {
        let dir = out.join("obe");
        let mut w = SeriesWriter::create(&dir)?;
        write_file(&dir.join("config.cfg"), &cfg.to_text())?;
        let started = Instant::now();
        let half = 0.5 * cfg.grid.dt;
        let res = run_with(&sc, |s| {
            if handoff.is_none() && s.t >= t_hand - half {
                handoff = Some(s.rho21.clone());
            }
            let snap = if cfg.output.full_state { Snapshot::from_state(s) } else { Snapshot::from_field(s.t, "rho21", &s.rho21) };
            w.push(&snap).map_err(|e| ObeError::Sink(e.to_string()))
        });
        match res {
            Ok(_) => {}
            Err((err, last)) => {
                if let Some(s) = last {
                    let _ = crate::io::save_snapshot(&Snapshot::from_state(&s), &dir.join("last_good.eits"));
                }
                return Err(match err {
                    ObeError::Sink(m) => CliError::Io(m),
                    ObeError::Config(m) => CliError::Config(m),
                    e => CliError::Divergence(e.to_string()),
                });
            }
        }
        println!("obe: {} snapshots in {:.1} s -> {}", (cfg.grid.t_end / snapshot_interval(&cfg)).ceil(), started.elapsed().as_secs_f64(), dir.display());
        finish_series(&dir, &cfg)?;
    }

    if solver != SolverChoice::Obe {
        let dir = out.join("effective");
        let consts = cfg.consts().map_err(cfg_err)?;
        let mesh = effective_mesh(&cfg);
        let initial = match handoff.take() {
            Some(f) => {
                let mut f = if mesh.is_1d() { f.marginal_x() } else { f };
                if !f.normalize() {
                    return Err(CliError::Divergence(format!("OBE state at t = {t_hand:e} s has zero norm")));
                }
                f
            }
            None => analytic_state(&cfg, &mesh)?,
        };
        let started = Instant::now();
        let series = run_effective(&initial, &sc.schedule, &consts, t_hand, cfg.grid.t_end, effective_config(&cfg))
            .map_err(|e| CliError::Divergence(e.to_string()))?;
        println!("effective: {} snapshots in {:.1} s -> {}", series.len(), started.elapsed().as_secs_f64(), dir.display());
        crate::io::write_series(&dir, &series)?;
        write_file(&dir.join("config.cfg"), &cfg.to_text())?;
        finish_series(&dir, &cfg)?;
        if solver == SolverChoice::Both {
            let a = read_series(&out.join("obe"))?;
            let rows = overlaps(&series, &a, t_hand, cfg.grid.t_end)?;
            write_overlap(&out.join("overlap.csv"), &rows)?;
            let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            println!("overlap obe/effective: min {min:.4} over {} frames", rows.len());
        }
    }
    Ok(())
}

/// The injected level as an eigenstate of the gauge stage.
fn analytic_state(cfg: &RunConfig, mesh: &Mesh) -> Result<ComplexField2D, CliError> {
    let c = cfg.consts().map_err(cfg_err)?;
    let n = cfg.scenario.n;
    match cfg.scenario.kind {
        ScenarioKind::Qho => qho_profile(n, c.l_e.unwrap_or(f64::NAN), mesh),
        _ => landau_profile(n, cfg.k_s(), cfg.x0(&c), c.l_b, mesh),
    }
    .map_err(cfg_err)
}

/// Diagnostics CSV, optional grid dumps and the summary for a finished series.
fn finish_series(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let checks = analyze_dir(dir, cfg, None, None)?;
    for c in &checks {
        println!("  {c}");
    }
    if cfg.output.export_grids {
        let series = read_series(dir)?;
        let gdir = dir.join("grids");
        std::fs::create_dir_all(&gdir).map_err(|e| CliError::Io(e.to_string()))?;
        for (k, f) in series.frames.iter().enumerate() {
            export_intensity(&f.rho21, &gdir.join(format!("intensity_{k:05}.csv")))?;
        }
    }
    Ok(())
}

fn cmd_analyze(series: &Path, config: Option<&Path>, mode: Option<Mode>, basis_max: Option<usize>) -> Result<Vec<Check>, CliError> {
    let path = config.map(Path::to_path_buf).unwrap_or_else(|| series.join("config.cfg"));
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let cfg = load_config(&text).map_err(cfg_err)?;
    analyze_dir(series, &cfg, mode, basis_max)
}

/// Writes `diagnostics.csv` and `summary.txt` into `dir`.
pub fn analyze_dir(dir: &Path, cfg: &RunConfig, mode: Option<Mode>, basis_max: Option<usize>) -> Result<Vec<Check>, CliError> {
    let series = read_series(dir)?;
    let schedule = cfg.schedule().map_err(cfg_err)?;
    let mode = mode.unwrap_or(if cfg.scenario.kind == ScenarioKind::Qho { Mode::Qho } else { Mode::Landau });
    let max_n = basis_max.unwrap_or(cfg.output.basis_max);
    let series = series.window(schedule.storage_time(), f64::INFINITY);
    let mesh = series.mesh().ok_or_else(|| CliError::Analysis("no snapshots after storage".into()))?;
    let basis_mesh = if mode == Mode::Qho { Mesh::line(mesh.nx, mesh.dx, mesh.x_min) } else { mesh };
    let kind = cfg.basis_kind().map_err(cfg_err)?;
    // off-centre strips leave room for fewer levels; keep the ones that fit
    let mut basis = make_basis(kind, max_n, &basis_mesh);
    let mut n = max_n;
    while basis.is_err() && n > 0 {
        n -= 1;
        basis = make_basis(kind, n, &basis_mesh);
    }
    let basis = basis.map_err(analysis)?;
    if basis.max_n < max_n {
        eprintln!("note: basis truncated to n <= {} (level {} does not fit the grid)", basis.max_n, basis.max_n + 1);
    }
    let t0 = reference_time(cfg)?;
    let records = analyze(&series, Some(&basis), t0).map_err(analysis)?;
    export_timeseries(&records, basis.max_n, &dir.join("diagnostics.csv"))?;
    let checks = match mode {
        Mode::Landau => landau_checks(cfg, &records)?,
        Mode::Qho => qho_checks(cfg, &records)?,
    };
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    write_file(&dir.join("summary.txt"), &text)?;
    Ok(checks)
}

/// Time the state probabilities are normalised at: drive onset for a
/// driven oscillator, else gauge onset.
pub fn reference_time(cfg: &RunConfig) -> Result<f64, CliError> {
    let s = cfg.schedule().map_err(cfg_err)?;
    Ok(match s.drive_onset() {
        Some(t) if cfg.params.alpha != 0.0 => t,
        _ => s.gauge_onset(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    /// None for informational lines.
    pub pass: Option<bool>,
    pub detail: String,
}

impl Check {
    fn gate(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass: Some(pass), detail }
    }
    fn info(name: &str, detail: String) -> Self {
        Check { name: name.into(), pass: None, detail }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn samples(records: &[DiagnosticRecord], from: f64, to: f64, get: impl Fn(&DiagnosticRecord) -> Option<f64>) -> Vec<(f64, f64)> {
    records.iter().filter(|r| r.t >= from - 1e-12 && r.t <= to + 1e-12).filter_map(|r| get(r).map(|v| (r.t, v))).collect()
}

/// Landau checks: level frequency over the first 0.3 ms of the gauge
/// stage and strip position for stationary states; oscillation frequency,
/// amplitude and damping for displaced ones.
pub fn landau_checks(cfg: &RunConfig, records: &[DiagnosticRecord]) -> Result<Vec<Check>, CliError> {
    let c = cfg.consts().map_err(cfg_err)?;
    let s = cfg.schedule().map_err(cfg_err)?;
    let tg = s.gauge_onset();
    let n = cfg.scenario.n;
    let centre = -cfg.k_s() * c.l_b * c.l_b;
    let offset = cfg.x0(&c) - centre;
    let mut out = Vec::new();
    let end = records.last().map_or(tg, |r| r.t);

    if offset.abs() < 0.05 * c.l_b {
        let w = samples(records, tg, tg + 0.3e-3, |r| r.omega_inst);
        if w.len() >= 2 {
            let target = n as f64 + 0.5;
            let ratios: Vec<f64> = w.iter().map(|p| p.1 / c.omega_b).collect();
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let worst = ratios.iter().map(|r| (r - target).abs() / target).fold(0.0, f64::max);
            out.push(Check::gate(
                "level frequency",
                (mean - target).abs() <= 0.05 * target,
                format!("mean omega/omega_B = {mean:.4} over 0.3 ms (target {target}, ±5%); pointwise max deviation {:.1}%", 100.0 * worst),
            ));
        }
        let x = samples(records, tg, tg + 3e-3, |r| r.peak_x);
        if !x.is_empty() {
            let drift = x.iter().map(|p| (p.1 - centre).abs()).fold(0.0, f64::max);
            out.push(Check::gate(
                "strip position",
                drift < 0.1 * c.l_b,
                format!("max |x_peak - x_c| = {:.4} l_B over {:.2} ms (limit 0.1 l_B)", drift / c.l_b, (x.last().unwrap().0 - tg) * 1e3),
            ));
        }
    } else {
        let x = samples(records, tg, end, |r| r.peak_x.map(|v| v - centre));
        let period = 2.0 * std::f64::consts::PI / c.omega_b;
        // damping makes crossing spacings and half swings biased estimators
        // of ω and A, so both come from one damped-cosine fit
        match fit_damped_cosine(&x, tg, c.omega_b) {
            Some(fit) => {
                let rel = fit.rms / fit.amplitude;
                out.push(Check::gate(
                    "oscillation frequency",
                    (fit.omega / c.omega_b - 1.0).abs() <= 0.1,
                    format!(
                        "omega = {:.4} omega_B from a damped-cosine fit, rms residual {:.1}% of A; {} zero crossings (±10%)",
                        fit.omega / c.omega_b,
                        100.0 * rel,
                        zero_crossings(&x).len()
                    ),
                ));
                out.push(Check::gate(
                    "oscillation amplitude",
                    (fit.amplitude / offset.abs() - 1.0).abs() <= 0.1,
                    format!(
                        "fitted envelope A = {:.4} |x0 + k_s l_B^2| at gauge onset, decay rate {:.0} s^-1 (±10%)",
                        fit.amplitude / offset.abs(),
                        fit.gamma
                    ),
                ));
            }
            None => out.push(Check::gate("oscillation frequency", false, format!("only {} samples of x_peak - x_c", x.len()))),
        }
        let amp_at = |t: f64| {
            x.iter().filter(|p| (p.0 - t).abs() <= 0.5 * period).fold(0.0f64, |m, p| m.max(p.1.abs()))
        };
        let (a0, a1) = (amp_at(tg + 0.5e-3), amp_at(tg + 3e-3));
        out.push(Check::gate(
            "damping",
            end >= tg + 3e-3 - 1e-9 && a1 < a0,
            format!("envelope {:.4} l_B at 0.5 ms, {:.4} l_B at 3 ms", a0 / c.l_b, a1 / c.l_b),
        ));
    }
    if let Some(last) = records.last() {
        let f: Vec<String> = last.fidelities.iter().enumerate().map(|(k, v)| format!("F_{k}={v:.3}")).collect();
        out.push(Check::info("final fidelities", format!("t = {:.3} ms: {}", last.t * 1e3, f.join(" "))));
    }
    Ok(out)
}

/// Oscillator checks, relative to the normalisation time t0.
pub fn qho_checks(cfg: &RunConfig, records: &[DiagnosticRecord]) -> Result<Vec<Check>, CliError> {
    let c = cfg.consts().map_err(cfg_err)?;
    let t0 = reference_time(cfg)?;
    let n = cfg.scenario.n;
    let end = records.last().map_or(t0, |r| r.t);
    let p = |k: usize| samples(records, t0, end, move |r| r.probabilities.get(k).copied());
    let mut out = Vec::new();
    let driven = cfg.params.alpha != 0.0 && cfg.params.omega_d > 0.0;
    let dt = records.windows(2).next().map_or(1.0, |w| w[1].t - w[0].t);
    // one period of the 2ω_d ripple
    let smooth = if driven { (std::f64::consts::PI / cfg.params.omega_d / (2.0 * dt)).round() as usize } else { 0 };
    match (driven, n) {
        (true, 0) => {
            let p0 = p(0);
            match first_below(&p0, 0.05) {
                Some(t) => out.push(Check::gate(
                    "P_0 depletion",
                    ((t - t0) / 0.65e-3 - 1.0).abs() <= 0.2,
                    format!("P_0 < 0.05 at {:.4} ms after drive onset (0.65 ms ±20%)", (t - t0) * 1e3),
                )),
                None => out.push(Check::gate("P_0 depletion", false, "P_0 never drops below 0.05".into())),
            }
            if let Some(omega_a) = c.omega_a {
                let target = t0 + std::f64::consts::PI / omega_a;
                let (mins, _) = extrema(&p0, smooth);
                match mins.first() {
                    Some(&(t, v)) => out.push(Check::gate(
                        "first P_0 minimum",
                        ((t - t0) / (target - t0) - 1.0).abs() <= 0.15,
                        format!("at {:.4} ms (P_0 = {v:.3}); t0 + pi/Omega_A = {:.4} ms (±15%)", t * 1e3, target * 1e3),
                    )),
                    None => out.push(Check::gate("first P_0 minimum", false, format!("no minimum before {:.3} ms", end * 1e3))),
                }
            }
        }
        (true, 1) => {
            let p1 = p(1);
            let (mins, maxs) = extrema(&p1, smooth);
            let revival = mins.first().and_then(|m| maxs.iter().find(|x| x.0 > m.0));
            match revival {
                Some(&(t, v)) => out.push(Check::gate(
                    "P_1 revival",
                    t <= 1.15e-3,
                    format!("local maximum P_1 = {v:.3} at {:.4} ms (before 1.0 ± 0.15 ms)", t * 1e3),
                )),
                None => out.push(Check::gate("P_1 revival", false, "no maximum after the first P_1 minimum".into())),
            }
        }
        (false, _) => {
            let others = (0..=cfg.output.basis_max)
                .filter(|&k| k != n)
                .map(|k| p(k).iter().fold(0.0f64, |m, s| m.max(s.1)))
                .fold(0.0f64, f64::max);
            out.push(Check::gate("undriven leakage", others < 0.02, format!("max P_(m != {n}) = {others:.4} (limit 0.02)")));
        }
        _ => {}
    }
    if let Some(last) = records.last() {
        let f: Vec<String> = last.probabilities.iter().enumerate().map(|(k, v)| format!("P_{k}={v:.3}")).collect();
        out.push(Check::info("final probabilities", format!("t = {:.3} ms: {}", last.t * 1e3, f.join(" "))));
    }
    Ok(out)
}

fn overlaps(b: &TimeSeries, a: &TimeSeries, from: f64, to: f64) -> Result<Vec<(f64, f64)>, CliError> {
    let tol = 1e-9;
    let a = a.window(from - tol, to + tol);
    let b = b.window(from - tol, to + tol);
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Analysis(format!("no frames in [{from:e}, {to:e}] s")));
    }
    let (ma, mb) = (a.mesh().unwrap(), b.mesh().unwrap());
    if ma.nx != mb.nx || (!ma.is_1d() && !mb.is_1d() && ma.ny != mb.ny) {
        return Err(CliError::Analysis(format!("grids differ: {}x{} vs {}x{}", ma.nx, ma.ny, mb.nx, mb.ny)));
    }
    cross_overlap(&b, &a, tol).map_err(analysis)
}

fn write_overlap(path: &Path, rows: &[(f64, f64)]) -> Result<(), CliError> {
    let mut text = String::from("t,overlap\n");
    for (t, o) in rows {
        let _ = writeln!(text, "{t:.16e},{o:.16e}");
    }
    write_file(path, &text)
}

fn cmd_compare(a: &Path, b: &Path, min: f64, from: Option<f64>, to: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let sa = read_series(a)?;
    let sb = read_series(b)?;
    let first = |s: &TimeSeries| s.frames.first().map_or(0.0, |f| f.t);
    let last = |s: &TimeSeries| s.frames.last().map_or(0.0, |f| f.t);
    let from = from.unwrap_or(first(&sa).max(first(&sb)));
    let to = to.unwrap_or(last(&sa).min(last(&sb)));
    let rows = overlaps(&sb, &sa, from, to)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| a.join("overlap.csv"));
    write_overlap(&path, &rows)?;
    let (tmin, omin) = rows.iter().copied().fold((f64::NAN, f64::INFINITY), |m, r| if r.1 < m.1 { r } else { m });
    println!("min overlap {omin:.6} at t = {:.4} ms over {} frames ({:.4}..{:.4} ms)", tmin * 1e3, rows.len(), from * 1e3, to * 1e3);
    if omin >= min {
        Ok(())
    } else {
        Err(CliError::Gate(format!("min overlap {omin:.4} < {min}")))
    }
}
