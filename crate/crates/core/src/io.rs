//! Run configuration, snapshot files and CSV export.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. A value
//! may carry a trailing unit token, which must match the unit implied by the
//! key name (`_hz`, `_m`, `_s`).

use crate::diagnostics::DiagnosticRecord;
use crate::drives::{
    landau_schedule, qho_schedule, uniform_schedule, DriveError, DriveSchedule, LandauTiming, ProbePulse, QhoTiming, Recipe,
};
use crate::effective::{EffectiveConfig, YBoundary};
use crate::field::{ComplexField2D, Mesh, C64};
use crate::model::{derive_constants, DerivedConsts, GridSpec, ModelError, PhysParams};
use crate::obe::{ProbeMode, Scenario, SimState, SolverConfig, Splitting};
use crate::series::{Frame, TimeSeries};
use crate::states::BasisKind;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("key `{key}` given twice (lines {first} and {second})")]
    Duplicate { key: String, first: usize, second: usize },
    #[error("line {line}: unknown key `{key}`")]
    Unknown { key: String, line: usize },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("line {line}: `{key}` is in {expected}, value carries unit `{found}`")]
    Unit { key: String, line: usize, expected: String, found: String },
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("scenario: {0}")]
    Scenario(String),
}

impl From<DriveError> for ConfigError {
    fn from(e: DriveError) -> Self {
        ConfigError::Scenario(e.to_string())
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Scenario(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Landau,
    LandauOffset,
    Qho,
    NullUniform,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Landau => "landau",
            ScenarioKind::LandauOffset => "landau_offset",
            ScenarioKind::Qho => "qho",
            ScenarioKind::NullUniform => "null_uniform",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "landau" => ScenarioKind::Landau,
            "landau_offset" => ScenarioKind::LandauOffset,
            "qho" => ScenarioKind::Qho,
            "null_uniform" => ScenarioKind::NullUniform,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    /// stored wavenumber in units of 2π/L_y
    pub k_s_over_k0: f64,
    /// profile centre in units of (2π/L_y)·l_B²; None = stationary −k_s l_B²
    pub x0_over_k0_lb2: Option<f64>,
    pub gauge_consistent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub snapshot_stride: usize,
    pub full_state: bool,
    pub export_grids: bool,
    pub basis_max: usize,
}

/// Timing keys that were set explicitly; the rest come from the recipe defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingOverrides {
    pub t_store: Option<f64>,
    pub t_retrieve: Option<f64>,
    pub t_gauge: Option<f64>,
    pub t_trap: Option<f64>,
    pub t_drive: Option<f64>,
    pub width_store: Option<f64>,
    pub width: Option<f64>,
    pub width_drive: Option<f64>,
    pub probe_peak_over_gamma: Option<f64>,
    pub probe_on: Option<f64>,
    pub probe_off: Option<f64>,
    pub probe_edge: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: PhysParams,
    pub grid: GridSpec,
    pub scenario: ScenarioSpec,
    pub timing: TimingOverrides,
    pub solver: SolverConfig,
    pub effective: EffectiveConfig,
    pub output: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unit {
    None,
    Hz,
    M,
    S,
}

impl Unit {
    fn of(key: &str) -> Unit {
        if key.ends_with("_hz") {
            Unit::Hz
        } else if key.ends_with("_m") {
            Unit::M
        } else if key.ends_with("_s") {
            Unit::S
        } else {
            Unit::None
        }
    }

    fn token(self) -> &'static str {
        match self {
            Unit::None => "dimensionless",
            Unit::Hz => "Hz",
            Unit::M => "m",
            Unit::S => "s",
        }
    }
}

/// Every accepted key, in the order the template emits them. `true` marks
/// keys that must be present.
pub const KEYS: &[(&str, bool, &str)] = &[
    ("gamma_hz", true, "excited-state decay rate Γ (angular, s⁻¹)"),
    ("lambda_m", true, "probe wavelength"),
    ("delta_p_over_gamma", true, "one-photon detuning Δ_p / Γ during retrieval"),
    ("omega_c_over_gamma", true, "control Rabi frequency Ω_c / Γ"),
    ("xi_x", true, "optical depth along x"),
    ("xi_y", true, "optical depth along y"),
    ("L_x_m", true, "medium length along x"),
    ("L_y_m", true, "medium length along y"),
    ("alpha", false, "modulation depth of the R/L drive"),
    ("beta", false, "quartic coefficient of the trap"),
    ("omega_e_hz", false, "trap frequency ω_E (angular)"),
    ("omega_d_hz", false, "drive frequency ω_d (angular)"),
    ("grid.nx", true, "nodes along x"),
    ("grid.ny", true, "nodes along y"),
    ("grid.dx_m", true, "x spacing"),
    ("grid.dy_m", true, "y spacing"),
    ("grid.x_min_m", false, "first x node (default: box centred on 0)"),
    ("grid.y_min_m", false, "first y node (default: box centred on 0)"),
    ("grid.dt_s", true, "atomic time step"),
    ("grid.t_end_s", true, "end time"),
    ("scenario.kind", true, "landau | landau_offset | qho | null_uniform"),
    ("scenario.n", false, "level index of the injected profile"),
    ("scenario.k_s_over_k0", false, "stored wavenumber k_s in units of 2π/L_y"),
    ("scenario.x0_over_k0_lb2", false, "profile centre in units of (2π/L_y)·l_B² (default −k_s l_B²)"),
    ("scenario.gauge_consistent", false, "qho: also cancel m V_x²/2 in the two-photon detuning"),
    ("timing.t_store_s", false, "storage switch-off t_s"),
    ("timing.t_retrieve_s", false, "retrieval switch-on t_r"),
    ("timing.t_gauge_s", false, "landau: gauge-gradient switch-on t_LG"),
    ("timing.t_trap_s", false, "qho: trap switch-on t_H"),
    ("timing.t_drive_s", false, "qho: modulation switch-on t_D"),
    ("timing.width_store_s", false, "tanh width of the storage ramp"),
    ("timing.width_s", false, "tanh width of the other ramps"),
    ("timing.width_drive_s", false, "qho: tanh width of the modulation ramp"),
    ("probe.peak_over_gamma", false, "probe pulse peak / Γ"),
    ("probe.t_on_s", false, "probe pulse rise"),
    ("probe.t_off_s", false, "probe pulse fall"),
    ("probe.edge_s", false, "probe pulse edge width"),
    ("solver.splitting", false, "coupled | atoms_first | strang"),
    ("solver.probe_mode", false, "quasi_static | time_resolved"),
    ("solver.diffraction", false, "transverse probe diffraction"),
    ("solver.advection", false, "probe propagation term (time_resolved only)"),
    ("solver.tolerance", false, "probe residual bound checked at snapshots"),
    ("solver.write_dt_s", false, "coarser step while only the forward beam is on, at most 2 dt"),
    ("solver.effective_dt_s", false, "effective-equation step"),
    ("solver.effective_diffusion", false, "keep the −iΓ/2Δ_p P²/2m term"),
    ("solver.effective_y_boundary", false, "wall | periodic"),
    ("solver.effective_tolerance", false, "relative residual of the implicit solve"),
    ("output.dir", false, "output directory"),
    ("output.snapshot_stride", false, "atomic steps between snapshots"),
    ("output.full_state", false, "store every field, not just ρ21"),
    ("output.export_grids", false, "write |ρ21|² grids as CSV"),
    ("output.basis_max", false, "highest level projected onto"),
];

struct Entry {
    line: usize,
    value: String,
}

struct Fields(HashMap<String, Entry>);

impl Fields {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let mut parts = e.value.split_whitespace();
        let num = parts.next().unwrap_or("");
        let unit = Unit::of(key);
        if let Some(tok) = parts.next() {
            if unit == Unit::None || tok != unit.token() || parts.next().is_some() {
                return Err(ConfigError::Unit {
                    key: key.into(),
                    line: e.line,
                    expected: unit.token().into(),
                    found: tok.into(),
                });
            }
        }
        let v: f64 = num
            .parse()
            .map_err(|_| ConfigError::Parse { line: e.line, msg: format!("`{key}` expects a number, got `{num}`") })?;
        if !v.is_finite() {
            return Err(ConfigError::Parse { line: e.line, msg: format!("`{key}` must be finite") });
        }
        Ok(Some(v))
    }

    fn req(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        e.value
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::Parse { line: e.line, msg: format!("`{key}` expects a non-negative integer, got `{}`", e.value) })
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        match e.value.as_str() {
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            v => Err(ConfigError::Parse { line: e.line, msg: format!("`{key}` expects true or false, got `{v}`") }),
        }
    }

    fn choice<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, options: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        parse(&e.value)
            .map(Some)
            .ok_or_else(|| ConfigError::Parse { line: e.line, msg: format!("`{key}` must be one of {options}, got `{}`", e.value) })
    }
}

fn tokenize(text: &str) -> Result<Fields, ConfigError> {
    let mut map: HashMap<String, Entry> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Parse { line, msg: format!("expected `key = value`, got `{body}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse { line, msg: "empty key or value".into() });
        }
        if !KEYS.iter().any(|(name, _, _)| *name == key) {
            return Err(ConfigError::Unknown { key: key.into(), line });
        }
        if let Some(prev) = map.get(key) {
            return Err(ConfigError::Duplicate { key: key.into(), first: prev.line, second: line });
        }
        map.insert(key.into(), Entry { line, value: value.into() });
    }
    Ok(Fields(map))
}

pub fn load_config(text: &str) -> Result<RunConfig, ConfigError> {
    let f = tokenize(text)?;
    for (key, required, _) in KEYS {
        if *required && f.raw(key).is_none() {
            return Err(ConfigError::Missing((*key).into()));
        }
    }
    let gamma = f.req("gamma_hz")?;
    let mut params = PhysParams {
        gamma,
        lambda: f.req("lambda_m")?,
        delta_p: f.req("delta_p_over_gamma")? * gamma,
        delta_p_storage: 0.0,
        omega_c: f.req("omega_c_over_gamma")? * gamma,
        xi_x: f.req("xi_x")?,
        xi_y: f.req("xi_y")?,
        l_x: f.req("L_x_m")?,
        l_y: f.req("L_y_m")?,
        alpha: f.f64("alpha")?.unwrap_or(0.0),
        beta: f.f64("beta")?.unwrap_or(0.0),
        omega_e: f.f64("omega_e_hz")?.unwrap_or(0.0),
        omega_d: f.f64("omega_d_hz")?.unwrap_or(0.0),
    };
    params.delta_p_storage = 0.0;
    let count = |key: &str| -> Result<usize, ConfigError> {
        let v = f.usize(key)?.ok_or_else(|| ConfigError::Missing(key.into()))?;
        if v == 0 {
            return Err(ConfigError::Invalid { key: key.into(), msg: "must be positive".into() });
        }
        Ok(v)
    };
    let (nx, ny) = (count("grid.nx")?, count("grid.ny")?);
    let (dx, dy) = (f.req("grid.dx_m")?, f.req("grid.dy_m")?);
    for (key, v) in [("grid.dx_m", dx), ("grid.dy_m", dy), ("grid.dt_s", f.req("grid.dt_s")?)] {
        if v <= 0.0 {
            return Err(ConfigError::Invalid { key: key.into(), msg: "must be positive".into() });
        }
    }
    let centred = Mesh::centered(nx, ny, dx, dy);
    let grid = GridSpec {
        nx,
        ny,
        dx,
        dy,
        dt: f.req("grid.dt_s")?,
        x_min: f.f64("grid.x_min_m")?.unwrap_or(centred.x_min),
        y_min: f.f64("grid.y_min_m")?.unwrap_or(centred.y_min),
        t_end: f.req("grid.t_end_s")?,
    };
    let kind = f.choice("scenario.kind", ScenarioKind::parse, "landau, landau_offset, qho, null_uniform")?.unwrap();
    let scenario = ScenarioSpec {
        kind,
        n: f.usize("scenario.n")?.unwrap_or(0),
        k_s_over_k0: f.f64("scenario.k_s_over_k0")?.unwrap_or(0.0),
        x0_over_k0_lb2: f.f64("scenario.x0_over_k0_lb2")?,
        gauge_consistent: f.bool("scenario.gauge_consistent")?.unwrap_or(false),
    };
    if kind == ScenarioKind::LandauOffset && scenario.x0_over_k0_lb2.is_none() {
        return Err(ConfigError::Missing("scenario.x0_over_k0_lb2".into()));
    }
    let timing = TimingOverrides {
        t_store: f.f64("timing.t_store_s")?,
        t_retrieve: f.f64("timing.t_retrieve_s")?,
        t_gauge: f.f64("timing.t_gauge_s")?,
        t_trap: f.f64("timing.t_trap_s")?,
        t_drive: f.f64("timing.t_drive_s")?,
        width_store: f.f64("timing.width_store_s")?,
        width: f.f64("timing.width_s")?,
        width_drive: f.f64("timing.width_drive_s")?,
        probe_peak_over_gamma: f.f64("probe.peak_over_gamma")?,
        probe_on: f.f64("probe.t_on_s")?,
        probe_off: f.f64("probe.t_off_s")?,
        probe_edge: f.f64("probe.edge_s")?,
    };
    let d = SolverConfig::default();
    let splitting = f.choice(
        "solver.splitting",
        |s| match s {
            "coupled" => Some(Splitting::Coupled),
            "atoms_first" => Some(Splitting::AtomsFirst),
            "strang" => Some(Splitting::Strang),
            _ => None,
        },
        "coupled, atoms_first, strang",
    )?;
    let probe_mode = f.choice(
        "solver.probe_mode",
        |s| match s {
            "quasi_static" => Some(ProbeMode::QuasiStatic),
            "time_resolved" => Some(ProbeMode::TimeResolved),
            _ => None,
        },
        "quasi_static, time_resolved",
    )?;
    let stride = f.usize("output.snapshot_stride")?.unwrap_or(d.snapshot_stride);
    if stride == 0 {
        return Err(ConfigError::Invalid { key: "output.snapshot_stride".into(), msg: "must be positive".into() });
    }
    let solver = SolverConfig {
        splitting: splitting.unwrap_or(d.splitting),
        probe_mode: probe_mode.unwrap_or(d.probe_mode),
        diffraction: f.bool("solver.diffraction")?.unwrap_or(d.diffraction),
        advection: f.bool("solver.advection")?.unwrap_or(d.advection),
        inject_forward: true,
        tolerance: f.f64("solver.tolerance")?.unwrap_or(d.tolerance),
        snapshot_stride: stride,
        write_dt: f.f64("solver.write_dt_s")?,
        keep_full_state: false,
    };
    let e = EffectiveConfig::default();
    let effective = EffectiveConfig {
        dt: f.f64("solver.effective_dt_s")?.unwrap_or(e.dt),
        diffusion: f.bool("solver.effective_diffusion")?.unwrap_or(e.diffusion),
        y_boundary: f
            .choice(
                "solver.effective_y_boundary",
                |s| match s {
                    "wall" => Some(YBoundary::Wall),
                    "periodic" => Some(YBoundary::Periodic),
                    _ => None,
                },
                "wall, periodic",
            )?
            .unwrap_or(e.y_boundary),
        tolerance: f.f64("solver.effective_tolerance")?.unwrap_or(e.tolerance),
        max_iterations: e.max_iterations,
        snapshot_stride: e.snapshot_stride,
    };
    let output = OutputSpec {
        dir: f.raw("output.dir").map(|e| PathBuf::from(&e.value)).unwrap_or_else(|| PathBuf::from("out")),
        snapshot_stride: stride,
        full_state: f.bool("output.full_state")?.unwrap_or(false),
        export_grids: f.bool("output.export_grids")?.unwrap_or(false),
        basis_max: f.usize("output.basis_max")?.unwrap_or(3),
    };
    Ok(RunConfig { params, grid, scenario, timing, solver, effective, output })
}

pub fn read_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
    load_config(&text).map_err(IoError::Config)
}

impl RunConfig {
    pub fn consts(&self) -> Result<DerivedConsts, ConfigError> {
        Ok(derive_constants(&self.params, None)?)
    }

    /// k_s in m⁻¹.
    pub fn k_s(&self) -> f64 {
        self.scenario.k_s_over_k0 * 2.0 * std::f64::consts::PI / self.params.l_y
    }

    /// Profile centre in m.
    pub fn x0(&self, consts: &DerivedConsts) -> f64 {
        let k0 = 2.0 * std::f64::consts::PI / self.params.l_y;
        match self.scenario.x0_over_k0_lb2 {
            Some(v) => v * k0 * consts.l_b * consts.l_b,
            None => -self.k_s() * consts.l_b * consts.l_b,
        }
    }

    pub fn landau_timing(&self) -> LandauTiming {
        let d = LandauTiming::default();
        let t = &self.timing;
        LandauTiming {
            t_s: t.t_store.unwrap_or(d.t_s),
            t_r: t.t_retrieve.unwrap_or(d.t_r),
            t_lg: t.t_gauge.unwrap_or(d.t_lg),
            tau_s: t.width_store.unwrap_or(d.tau_s),
            tau: t.width.unwrap_or(d.tau),
        }
    }

    pub fn qho_timing(&self) -> QhoTiming {
        let d = QhoTiming::default();
        let t = &self.timing;
        QhoTiming {
            t_s: t.t_store.unwrap_or(d.t_s),
            t_r: t.t_retrieve.unwrap_or(d.t_r),
            t_h: t.t_trap.unwrap_or(d.t_h),
            t_d: t.t_drive.unwrap_or(d.t_d),
            tau_s: t.width_store.unwrap_or(d.tau_s),
            tau: t.width.unwrap_or(d.tau),
            tau_d: t.width_drive.unwrap_or(d.tau_d),
        }
    }

    pub fn schedule(&self) -> Result<DriveSchedule, ConfigError> {
        let c = self.consts()?;
        let mesh = self.grid.mesh();
        let sc = &self.scenario;
        let mut s = match sc.kind {
            ScenarioKind::Landau | ScenarioKind::LandauOffset => {
                landau_schedule(&self.params, &c, sc.n, self.k_s(), self.x0(&c), self.landau_timing(), &mesh)?
            }
            ScenarioKind::NullUniform => uniform_schedule(&self.params, &c, sc.n, self.x0(&c), self.landau_timing(), &mesh)?,
            ScenarioKind::Qho => {
                let mut s = qho_schedule(&self.params, &c, sc.n, self.qho_timing(), &mesh)?;
                if let Recipe::Qho { timing, .. } = s.recipe {
                    s.recipe = Recipe::Qho { timing, gauge_consistent: sc.gauge_consistent };
                }
                s
            }
        };
        let t = &self.timing;
        let p: &mut ProbePulse = &mut s.probe;
        if let Some(v) = t.probe_peak_over_gamma {
            p.peak = v * self.params.gamma;
        }
        p.t_on = t.probe_on.unwrap_or(p.t_on);
        p.t_off = t.probe_off.unwrap_or(p.t_off);
        p.edge = t.probe_edge.unwrap_or(p.edge);
        Ok(s)
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let mut sc = Scenario::new(self.grid, self.schedule()?);
        sc.solver = self.solver;
        sc.solver.keep_full_state = self.output.full_state;
        Ok(sc)
    }

    /// Basis the run is analysed against: strips for the stored k_s centred
    /// at −k_s l_B², or oscillator states on the x line.
    pub fn basis_kind(&self) -> Result<BasisKind, ConfigError> {
        let c = self.consts()?;
        Ok(match self.scenario.kind {
            ScenarioKind::Qho => BasisKind::Qho {
                l_e: c.l_e.ok_or_else(|| ConfigError::Invalid { key: "omega_e_hz".into(), msg: "must be positive".into() })?,
            },
            _ => BasisKind::Landau { k_s: self.k_s(), x0: -self.k_s() * c.l_b * c.l_b, l_b: c.l_b },
        })
    }

    /// Serialises every key; `load_config(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let g = &self.grid;
        let sc = &self.scenario;
        let t = &self.timing;
        let s = &self.solver;
        let e = &self.effective;
        let o = &self.output;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("gamma_hz", fmt(p.gamma));
        put("lambda_m", fmt(p.lambda));
        put("delta_p_over_gamma", fmt(p.delta_p / p.gamma));
        put("omega_c_over_gamma", fmt(p.omega_c / p.gamma));
        put("xi_x", fmt(p.xi_x));
        put("xi_y", fmt(p.xi_y));
        put("L_x_m", fmt(p.l_x));
        put("L_y_m", fmt(p.l_y));
        put("alpha", fmt(p.alpha));
        put("beta", fmt(p.beta));
        put("omega_e_hz", fmt(p.omega_e));
        put("omega_d_hz", fmt(p.omega_d));
        put("grid.nx", g.nx.to_string());
        put("grid.ny", g.ny.to_string());
        put("grid.dx_m", fmt(g.dx));
        put("grid.dy_m", fmt(g.dy));
        put("grid.x_min_m", fmt(g.x_min));
        put("grid.y_min_m", fmt(g.y_min));
        put("grid.dt_s", fmt(g.dt));
        put("grid.t_end_s", fmt(g.t_end));
        put("scenario.kind", sc.kind.name().into());
        put("scenario.n", sc.n.to_string());
        put("scenario.k_s_over_k0", fmt(sc.k_s_over_k0));
        if let Some(v) = sc.x0_over_k0_lb2 {
            put("scenario.x0_over_k0_lb2", fmt(v));
        }
        put("scenario.gauge_consistent", sc.gauge_consistent.to_string());
        let opt = [
            ("timing.t_store_s", t.t_store),
            ("timing.t_retrieve_s", t.t_retrieve),
            ("timing.t_gauge_s", t.t_gauge),
            ("timing.t_trap_s", t.t_trap),
            ("timing.t_drive_s", t.t_drive),
            ("timing.width_store_s", t.width_store),
            ("timing.width_s", t.width),
            ("timing.width_drive_s", t.width_drive),
            ("probe.peak_over_gamma", t.probe_peak_over_gamma),
            ("probe.t_on_s", t.probe_on),
            ("probe.t_off_s", t.probe_off),
            ("probe.edge_s", t.probe_edge),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                put(k, fmt(v));
            }
        }
        put(
            "solver.splitting",
            match s.splitting {
                Splitting::Coupled => "coupled",
                Splitting::AtomsFirst => "atoms_first",
                Splitting::Strang => "strang",
            }
            .into(),
        );
        put(
            "solver.probe_mode",
            match s.probe_mode {
                ProbeMode::QuasiStatic => "quasi_static",
                ProbeMode::TimeResolved => "time_resolved",
            }
            .into(),
        );
        put("solver.diffraction", s.diffraction.to_string());
        put("solver.advection", s.advection.to_string());
        put("solver.tolerance", fmt(s.tolerance));
        if let Some(w) = s.write_dt {
            put("solver.write_dt_s", fmt(w));
        }
        put("solver.effective_dt_s", fmt(e.dt));
        put("solver.effective_diffusion", e.diffusion.to_string());
        put(
            "solver.effective_y_boundary",
            match e.y_boundary {
                YBoundary::Wall => "wall",
                YBoundary::Periodic => "periodic",
            }
            .into(),
        );
        put("solver.effective_tolerance", fmt(e.tolerance));
        put("output.dir", o.dir.display().to_string());
        put("output.snapshot_stride", o.snapshot_stride.to_string());
        put("output.full_state", o.full_state.to_string());
        put("output.export_grids", o.export_grids.to_string());
        put("output.basis_max", o.basis_max.to_string());
        out
    }
}

/// Shortest round-trip decimal.
fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Commented config for one of the reference scenarios.
pub fn template(kind: ScenarioKind) -> String {
    let (params, grid, n) = match kind {
        ScenarioKind::Qho => (PhysParams::qho_reference(), GridSpec::centered(81, 81, 1e-4, 1e-4, 8e-8, 1.3e-3), 0),
        _ => (PhysParams::landau_reference(), GridSpec::centered(91, 81, 1e-4, 1e-4, 8e-8, 3.3e-3), 0),
    };
    let cfg = RunConfig {
        params,
        grid,
        scenario: ScenarioSpec {
            kind,
            n,
            k_s_over_k0: 0.0,
            x0_over_k0_lb2: (kind == ScenarioKind::LandauOffset).then_some(0.0),
            gauge_consistent: false,
        },
        timing: TimingOverrides::default(),
        solver: SolverConfig { diffraction: false, snapshot_stride: 125, ..SolverConfig::default() },
        effective: EffectiveConfig::default(),
        output: OutputSpec { dir: PathBuf::from("out"), snapshot_stride: 125, full_state: false, export_grids: false, basis_max: 3 },
    };
    let mut out = String::from("# eitsim run configuration (all values SI; angular frequencies in rad/s)\n");
    let body = cfg.to_text();
    for line in body.lines() {
        let key = line.split('=').next().unwrap().trim();
        if let Some((_, _, doc)) = KEYS.iter().find(|(k, _, _)| *k == key) {
            let _ = writeln!(out, "# {doc}");
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("file too short: {0}")]
    Short(String),
    #[error("not a snapshot file (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("malformed: {0}")]
    Format(String),
}

fn io_err(path: &Path, e: std::io::Error) -> IoError {
    IoError::Io(format!("{}: {e}", path.display()))
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"EITS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Named complex fields sharing one mesh at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub mesh: Mesh,
    pub fields: Vec<(String, ComplexField2D)>,
}

impl Snapshot {
    pub fn from_state(s: &SimState) -> Self {
        Snapshot { t: s.t, mesh: s.mesh(), fields: s.fields().into_iter().map(|(n, f)| (n.to_string(), f.clone())).collect() }
    }

    pub fn from_field(t: f64, name: &str, f: &ComplexField2D) -> Self {
        Snapshot { t, mesh: f.mesh, fields: vec![(name.into(), f.clone())] }
    }

    pub fn get(&self, name: &str) -> Option<&ComplexField2D> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    /// The full solver state, if every field is present.
    pub fn to_state(&self) -> Option<SimState> {
        let mut s = SimState::vacuum(self.mesh);
        s.t = self.t;
        for name in SimState::FIELD_NAMES {
            *s.field_mut(name)? = self.get(name)?.clone();
        }
        Some(s)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.mesh;
        let mut b = Vec::with_capacity(64 + self.fields.len() * (m.len() * 16 + 16));
        b.extend_from_slice(SNAPSHOT_MAGIC);
        b.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        b.extend_from_slice(&(m.nx as u32).to_le_bytes());
        b.extend_from_slice(&(m.ny as u32).to_le_bytes());
        for v in [m.dx, m.dy, self.t, m.x_min, m.y_min] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, _) in &self.fields {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
        }
        for (_, f) in &self.fields {
            for z in &f.data {
                b.extend_from_slice(&z.re.to_le_bytes());
                b.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, IoError> {
        let mut r = Cursor { b, pos: 0 };
        let magic = r.take(4)?;
        if magic != SNAPSHOT_MAGIC {
            return Err(IoError::Magic);
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(IoError::Version(version));
        }
        let (nx, ny) = (r.u32()? as usize, r.u32()? as usize);
        let (dx, dy, t, x_min, y_min) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        if nx == 0 || ny == 0 {
            return Err(IoError::Format("empty grid".into()));
        }
        let count = r.u32()? as usize;
        let mut names = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| IoError::Format("field name is not UTF-8".into()))?;
            names.push(name.to_string());
        }
        let mesh = Mesh::new(nx, ny, dx, dy, x_min, y_min);
        let need = count.checked_mul(nx * ny * 16).ok_or_else(|| IoError::Format("size overflow".into()))?;
        if b.len() - r.pos < need {
            return Err(IoError::Short(format!("payload has {} bytes, header promises {need}", b.len() - r.pos)));
        }
        let mut fields = Vec::with_capacity(count);
        for name in names {
            let data = (0..nx * ny).map(|_| Ok(C64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>, IoError>>()?;
            fields.push((name, ComplexField2D::from_vec(mesh, data)));
        }
        if r.pos != b.len() {
            return Err(IoError::Format(format!("{} trailing bytes", b.len() - r.pos)));
        }
        Ok(Snapshot { t, mesh, fields })
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.b.len() - self.pos < n {
            return Err(IoError::Short(format!("needed {n} more bytes at offset {}", self.pos)));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, IoError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_snapshot(s: &Snapshot, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, s.to_bytes()).map_err(|e| io_err(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, IoError> {
    let mut b = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut b)).map_err(|e| io_err(path, e))?;
    Snapshot::from_bytes(&b)
}

pub const MANIFEST: &str = "manifest.csv";

/// Streams snapshots into a directory: `snap_NNNNN.eits` plus `manifest.csv`
/// (index, t, file). The manifest is rewritten on every push so a crashed
/// run still leaves a readable prefix.
pub struct SeriesWriter {
    dir: PathBuf,
    rows: Vec<(f64, String)>,
}

impl SeriesWriter {
    pub fn create(dir: &Path) -> Result<Self, IoError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let w = SeriesWriter { dir: dir.to_path_buf(), rows: Vec::new() };
        w.flush()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn push(&mut self, s: &Snapshot) -> Result<(), IoError> {
        let name = format!("snap_{:05}.eits", self.rows.len());
        save_snapshot(s, &self.dir.join(&name))?;
        self.rows.push((s.t, name));
        self.flush()
    }

    fn flush(&self) -> Result<(), IoError> {
        let mut text = String::from("index,t,file\n");
        for (k, (t, name)) in self.rows.iter().enumerate() {
            let _ = writeln!(text, "{k},{},{name}", num(*t));
        }
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

pub fn write_series(dir: &Path, series: &TimeSeries) -> Result<(), IoError> {
    let mut w = SeriesWriter::create(dir)?;
    for f in &series.frames {
        let snap = match &f.state {
            Some(s) => Snapshot::from_state(s),
            None => Snapshot::from_field(f.t, "rho21", &f.rho21),
        };
        w.push(&snap)?;
    }
    Ok(())
}

/// Reads a series directory back; full states are attached when present.
pub fn read_series(dir: &Path) -> Result<TimeSeries, IoError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut series = TimeSeries::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(IoError::Format(format!("{} line {}: expected 3 columns", path.display(), k + 1)));
        }
        let snap = load_snapshot(&dir.join(cols[2]))?;
        let rho = snap.get("rho21").ok_or_else(|| IoError::Format(format!("{} has no rho21", cols[2])))?.clone();
        let mut frame = Frame::new(snap.t, rho);
        frame.state = snap.to_state().map(Box::new);
        series.push(frame);
    }
    if series.is_empty() {
        return Err(IoError::Format(format!("{} lists no snapshots", path.display())));
    }
    Ok(series)
}

/// 17 significant digits; reparses to the same f64.
fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

/// One row per record: t, omega_inst, F_0..F_max, P_0..P_max, peak_x, norm.
pub fn export_timeseries(records: &[DiagnosticRecord], max_n: usize, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = vec!["t".to_string(), "omega_inst".into()];
    header.extend((0..=max_n).map(|n| format!("F_{n}")));
    header.extend((0..=max_n).map(|n| format!("P_{n}")));
    header.push("peak_x".into());
    header.push("norm".into());
    let mut text = header.join(",") + "\n";
    for r in records {
        let mut row = vec![num(r.t), num(r.omega_inst.unwrap_or(f64::NAN))];
        row.extend((0..=max_n).map(|n| num(r.fidelities.get(n).copied().unwrap_or(f64::NAN))));
        row.extend((0..=max_n).map(|n| num(r.probabilities.get(n).copied().unwrap_or(f64::NAN))));
        row.push(num(r.peak_x.unwrap_or(f64::NAN)));
        row.push(num(r.norm));
        text += &row.join(",");
        text.push('\n');
    }
    w.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// |ρ21|² on the grid, one CSV row per y node.
pub fn export_intensity(f: &ComplexField2D, path: &Path) -> Result<(), IoError> {
    let m = f.mesh;
    let mut text = String::new();
    for j in 0..m.ny {
        let row: Vec<String> = f.row(j).iter().map(|z| num(z.norm_sqr())).collect();
        text += &row.join(",");
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Header plus numeric rows of a CSV written by this module.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines
        .enumerate()
        .map(|(k, l)| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| IoError::Format(format!("{} line {}: `{c}`", path.display(), k + 2))))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>, IoError>>()?;
    Ok((header, rows))
}

/// Column `name` of a CSV table.
pub fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Option<Vec<f64>> {
    let k = header.iter().position(|h| h == name)?;
    Some(rows.iter().map(|r| r[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_state(seed: u64) -> SimState {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mesh = Mesh::new(7, 5, 1e-4, 2e-4, -3e-4, -4e-4);
        let mut s = SimState::vacuum(mesh);
        s.t = 1.234_567_890_123e-4;
        for name in SimState::FIELD_NAMES {
            let f = s.field_mut(name).unwrap();
            for z in &mut f.data {
                *z = C64::new(rng.gen::<f64>() - 0.5, f64::from_bits(rng.gen::<u64>() >> 2));
            }
        }
        s
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let s = random_state(3);
        let snap = Snapshot::from_state(&s);
        let back = Snapshot::from_bytes(&snap.to_bytes()).unwrap();
        assert_eq!(back.t.to_bits(), s.t.to_bits());
        assert_eq!(back.mesh, s.mesh());
        let st = back.to_state().unwrap();
        for ((_, a), (_, b)) in st.fields().iter().zip(s.fields()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!((x.re.to_bits(), x.im.to_bits()), (y.re.to_bits(), y.im.to_bits()));
            }
        }
    }

    #[test]
    fn snapshot_errors() {
        let bytes = Snapshot::from_state(&random_state(1)).to_bytes();
        assert!(matches!(Snapshot::from_bytes(&bytes[..bytes.len() - 1]), Err(IoError::Short(_))));
        assert!(matches!(Snapshot::from_bytes(&bytes[..10]), Err(IoError::Short(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Snapshot::from_bytes(&bad), Err(IoError::Magic));
        let mut newer = bytes.clone();
        newer[4..8].copy_from_slice(&(SNAPSHOT_VERSION + 1).to_le_bytes());
        assert_eq!(Snapshot::from_bytes(&newer), Err(IoError::Version(SNAPSHOT_VERSION + 1)));
        let payload = 9 * 7 * 5 * 16;
        assert_eq!(bytes.len() - payload, 4 + 4 + 8 + 40 + 4 + SimState::FIELD_NAMES.iter().map(|n| 2 + n.len()).sum::<usize>());
    }

    #[test]
    fn series_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut series = TimeSeries::new();
        for k in 0..3 {
            let mut s = random_state(k);
            s.t = k as f64 * 1e-5;
            let mut f = Frame::new(s.t, s.rho21.clone());
            f.state = Some(Box::new(s));
            series.push(f);
        }
        write_series(dir.path(), &series).unwrap();
        let back = read_series(dir.path()).unwrap();
        assert_eq!(back.times(), series.times());
        assert_eq!(back.frames[2].state, series.frames[2].state);
        let empty = tempfile::tempdir().unwrap();
        assert!(read_series(empty.path()).is_err());
    }

    const FIG3: &str = include_str!("../../../configs/fig3.cfg");

    #[test]
    fn bundled_config_parses() {
        let c = load_config(FIG3).unwrap();
        assert_eq!(c.params.delta_p, 0.83e6);
        assert_eq!(c.params.xi_x, 900.0);
        assert_eq!(c.grid.nx, 91);
        assert_eq!(c.scenario.kind, ScenarioKind::Landau);
        let k = c.consts().unwrap();
        assert!((k.l_b - 0.773e-3).abs() < 1e-6);
    }

    #[test]
    fn config_errors_name_the_problem() {
        assert_eq!(load_config(""), Err(ConfigError::Missing("gamma_hz".into())));
        let dup = format!("{FIG3}\ngamma_hz = 2e6\n");
        match load_config(&dup) {
            Err(ConfigError::Duplicate { key, first, second }) => {
                assert_eq!(key, "gamma_hz");
                assert!(first < second);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_config(&format!("{FIG3}\nbogus = 1\n")), Err(ConfigError::Unknown { .. })));
        let unit = FIG3.replace("lambda_m = 5e-7", "lambda_m = 5e-7 s");
        assert!(matches!(load_config(&unit), Err(ConfigError::Unit { .. })));
        let ok_unit = FIG3.replace("lambda_m = 5e-7", "lambda_m = 5e-7 m");
        assert_eq!(load_config(&ok_unit).unwrap().params.lambda, 5e-7);
        assert!(matches!(load_config("gamma_hz 1e6\n"), Err(ConfigError::Parse { line: 1, .. })));
        let bad = FIG3.replace("scenario.kind = landau", "scenario.kind = spiral");
        assert!(matches!(load_config(&bad), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn template_round_trips() {
        for kind in [ScenarioKind::Landau, ScenarioKind::LandauOffset, ScenarioKind::Qho, ScenarioKind::NullUniform] {
            let text = template(kind);
            let c = load_config(&text).unwrap();
            let again = c.to_text();
            assert_eq!(load_config(&again).unwrap(), c);
            assert_eq!(load_config(&again).unwrap().to_text(), again);
            c.schedule().unwrap();
        }
    }

    #[test]
    fn csv_keeps_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let recs: Vec<DiagnosticRecord> = (0..4)
            .map(|k| DiagnosticRecord {
                t: 1e-4 / 3.0 * k as f64,
                omega_inst: (k > 0).then(|| 1250.0 + 1.0 / 7.0),
                fidelities: vec![0.1 / 3.0, 2.0f64.sqrt() / 10.0],
                probabilities: vec![std::f64::consts::PI / 10.0, 1e-17],
                peak_x: Some(-1e-3 / 7.0),
                norm: 4.398e-10 / 3.0,
            })
            .collect();
        export_timeseries(&recs, 1, &path).unwrap();
        let (h, rows) = read_csv(&path).unwrap();
        assert_eq!(h, ["t", "omega_inst", "F_0", "F_1", "P_0", "P_1", "peak_x", "norm"]);
        for (r, row) in recs.iter().zip(&rows) {
            assert_eq!(row[0], r.t);
            assert!(r.omega_inst.map_or(row[1].is_nan(), |w| (w - row[1]).abs() <= 1e-12 * w));
            assert_eq!(row[3], r.fidelities[1]);
            assert_eq!(row[5], r.probabilities[1]);
            assert_eq!(row[7], r.norm);
        }
        let empty = dir.path().join("e.csv");
        export_timeseries(&[], 2, &empty).unwrap();
        let (h, rows) = read_csv(&empty).unwrap();
        assert_eq!(h.len(), 2 + 3 + 3 + 2);
        assert!(rows.is_empty());
    }
}
