//! Optical-Bloch + paraxial-wave integrator.
//!
//! Atoms: RK4 on ρ21 and the four ρ31^d, pointwise. Probes: either solved
//! quasi-statically (the (1/c)∂_t term dropped, a trapezoid march along the
//! propagation axis with Crank–Nicolson transverse diffraction), or
//! time-resolved with a box scheme plus split diffraction sweeps.
//!
//! With counter-propagating beams the coupled system is stiff (eigenvalues of
//! order ηL/16), so the default `Coupled` splitting re-solves the probes at
//! every RK4 stage and needs dt ≲ 1e-7 s.

use crate::drives::{Beam, ColumnDrives, DriveSchedule, Recipe};
use crate::field::{ComplexField2D, Mesh, C64};
use crate::model::GridSpec;
use crate::series::{Frame, TimeSeries};
use crate::tridiag::Factored;
use thiserror::Error;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
/// Speed of light (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub rho21: ComplexField2D,
    /// F, B, R, L
    pub rho31: [ComplexField2D; 4],
    pub probe: [ComplexField2D; 4],
}

impl SimState {
    pub fn vacuum(mesh: Mesh) -> Self {
        let z = ComplexField2D::zeros(mesh);
        SimState {
            t: 0.0,
            rho21: z.clone(),
            rho31: [z.clone(), z.clone(), z.clone(), z.clone()],
            probe: [z.clone(), z.clone(), z.clone(), z],
        }
    }

    pub fn mesh(&self) -> Mesh {
        self.rho21.mesh
    }

    pub const FIELD_NAMES: [&'static str; 9] =
        ["rho21", "rho31_F", "rho31_B", "rho31_R", "rho31_L", "probe_F", "probe_B", "probe_R", "probe_L"];

    pub fn fields(&self) -> Vec<(&'static str, &ComplexField2D)> {
        let mut v = vec![(Self::FIELD_NAMES[0], &self.rho21)];
        for b in 0..4 {
            v.push((Self::FIELD_NAMES[1 + b], &self.rho31[b]));
        }
        for b in 0..4 {
            v.push((Self::FIELD_NAMES[5 + b], &self.probe[b]));
        }
        v
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut ComplexField2D> {
        match name {
            "rho21" => Some(&mut self.rho21),
            "rho31_F" => Some(&mut self.rho31[0]),
            "rho31_B" => Some(&mut self.rho31[1]),
            "rho31_R" => Some(&mut self.rho31[2]),
            "rho31_L" => Some(&mut self.rho31[3]),
            "probe_F" => Some(&mut self.probe[0]),
            "probe_B" => Some(&mut self.probe[1]),
            "probe_R" => Some(&mut self.probe[2]),
            "probe_L" => Some(&mut self.probe[3]),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|(_, f)| f.is_finite())
    }

    /// |ρ21| ≤ 1 + 1e-6 everywhere.
    pub fn weak_probe_ok(&self) -> bool {
        self.rho21.max_abs() <= 1.0 + 1e-6
    }

    pub fn scale(&mut self, s: f64) {
        let s = C64::new(s, 0.0);
        self.rho21.scale(s);
        for b in 0..4 {
            self.rho31[b].scale(s);
            self.probe[b].scale(s);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Splitting {
    /// probes re-solved at every RK4 stage (quasi-static only)
    Coupled,
    /// RK4 with frozen probes, then the probe update
    AtomsFirst,
    /// half atom step, probe update, half atom step
    Strang,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    QuasiStatic,
    TimeResolved,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub splitting: Splitting,
    pub probe_mode: ProbeMode,
    /// transverse (i/2k)∇² term
    pub diffraction: bool,
    /// ±∂ propagation term; off gives the static-envelope test mode
    pub advection: bool,
    /// inject Ω₀(t)·profile on the y_min edge of the forward probe
    pub inject_forward: bool,
    /// bound on the relative residual of the discrete probe equations,
    /// checked at every snapshot
    pub tolerance: f64,
    pub snapshot_stride: usize,
    /// optional coarser step used before retrieval starts, while only the
    /// forward beam is on (rounded to a multiple of dt)
    pub write_dt: Option<f64>,
    /// keep every field in the returned series (ρ21 only otherwise)
    pub keep_full_state: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            splitting: Splitting::Coupled,
            probe_mode: ProbeMode::QuasiStatic,
            diffraction: true,
            advection: true,
            inject_forward: true,
            tolerance: 1e-10,
            snapshot_stride: 200,
            write_dt: None,
            keep_full_state: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ObeError {
    #[error("non-finite field after step {step} (t = {t:e} s)")]
    Divergence { step: usize, t: f64 },
    #[error("probe residual {residual:e} exceeds tolerance at t = {t:e} s")]
    Residual { t: f64, residual: f64 },
    #[error("tridiagonal solve failed")]
    Solve,
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("snapshot sink failed: {0}")]
    Sink(String),
}

/// A failed run together with what had been produced before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: ObeError,
    pub series: TimeSeries,
    pub last_good: Option<Box<SimState>>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

/// One directional probe march with optional CN transverse diffraction.
#[derive(Clone, Debug)]
struct March {
    /// source factor iη·h/2 for step h along propagation
    src: C64,
    /// β = i h / (4k d²) for the transverse stencil
    beta: C64,
    solver: Option<Factored>,
}

impl March {
    fn new(eta: f64, h: f64, k: f64, d_perp: f64, n_perp: usize, diffraction: bool) -> Result<Self, ObeError> {
        let src = I * (0.5 * eta * h);
        let beta = I * (h / (4.0 * k * d_perp * d_perp));
        let solver = if diffraction && n_perp > 1 {
            Some(Factored::constant(n_perp, -beta, 1.0 + 2.0 * beta, -beta).ok_or(ObeError::Solve)?)
        } else {
            None
        };
        Ok(March { src, beta, solver })
    }
}

/// Quasi-static probe marches for all four directions.
#[derive(Clone, Debug)]
pub struct ProbeMarcher {
    mesh: Mesh,
    along_y: March,
    along_x: March,
    line: Vec<C64>,
}

impl ProbeMarcher {
    pub fn new(mesh: Mesh, eta: f64, k: f64, diffraction: bool) -> Result<Self, ObeError> {
        Ok(ProbeMarcher {
            mesh,
            along_y: March::new(eta, mesh.dy, k, mesh.dx, mesh.nx, diffraction)?,
            along_x: March::new(eta, mesh.dx, k, mesh.dy, mesh.ny, diffraction && mesh.ny > 1)?,
            line: vec![ZERO; mesh.nx.max(mesh.ny)],
        })
    }

    /// Fills `out[b]` from `rho31[b]`; `inflow` is the forward probe on the y_min row.
    pub fn solve(&mut self, rho31: [&[C64]; 4], inflow: Option<&[C64]>, out: [&mut [C64]; 4]) {
        let [f, b, r, l] = out;
        self.march_y(rho31[0], inflow, f, true);
        self.march_y(rho31[1], None, b, false);
        self.march_x(rho31[2], r, true);
        self.march_x(rho31[3], l, false);
    }

    fn march_y(&mut self, rho: &[C64], inflow: Option<&[C64]>, out: &mut [C64], forward: bool) {
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let m = &self.along_y;
        let first = if forward { 0 } else { ny - 1 };
        let row0 = &mut out[first * nx..(first + 1) * nx];
        match inflow {
            Some(v) => row0.copy_from_slice(v),
            None => row0.fill(ZERO),
        }
        for s in 1..ny {
            let (jp, j) = if forward { (s - 1, s) } else { (ny - s, ny - 1 - s) };
            let (prev, cur) = if forward {
                let (a, b) = out.split_at_mut(j * nx);
                (&a[jp * nx..], &mut b[..nx])
            } else {
                let (a, b) = out.split_at_mut(jp * nx);
                (&b[..nx], &mut a[j * nx..(j + 1) * nx])
            };
            let rp = &rho[jp * nx..(jp + 1) * nx];
            let rc = &rho[j * nx..(j + 1) * nx];
            match &m.solver {
                None => {
                    for i in 0..nx {
                        cur[i] = prev[i] + m.src * (rp[i] + rc[i]);
                    }
                }
                Some(fac) => {
                    for i in 0..nx {
                        let left = if i > 0 { prev[i - 1] } else { ZERO };
                        let right = if i + 1 < nx { prev[i + 1] } else { ZERO };
                        cur[i] = prev[i] + m.beta * (left - 2.0 * prev[i] + right) + m.src * (rp[i] + rc[i]);
                    }
                    fac.solve(cur);
                }
            }
        }
    }

    fn march_x(&mut self, rho: &[C64], out: &mut [C64], forward: bool) {
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let m = &self.along_x;
        let first = if forward { 0 } else { nx - 1 };
        match &m.solver {
            None => {
                for j in 0..ny {
                    let o = &mut out[j * nx..(j + 1) * nx];
                    let r = &rho[j * nx..(j + 1) * nx];
                    o[first] = ZERO;
                    if forward {
                        for i in 1..nx {
                            o[i] = o[i - 1] + m.src * (r[i - 1] + r[i]);
                        }
                    } else {
                        for i in (0..nx - 1).rev() {
                            o[i] = o[i + 1] + m.src * (r[i + 1] + r[i]);
                        }
                    }
                }
            }
            Some(fac) => {
                for j in 0..ny {
                    out[j * nx + first] = ZERO;
                }
                let line = &mut self.line[..ny];
                for s in 1..nx {
                    let (ip, i) = if forward { (s - 1, s) } else { (nx - s, nx - 1 - s) };
                    for j in 0..ny {
                        let p = out[j * nx + ip];
                        let below = if j > 0 { out[(j - 1) * nx + ip] } else { ZERO };
                        let above = if j + 1 < ny { out[(j + 1) * nx + ip] } else { ZERO };
                        line[j] = p + m.beta * (below - 2.0 * p + above) + m.src * (rho[j * nx + ip] + rho[j * nx + i]);
                    }
                    fac.solve(line);
                    for j in 0..ny {
                        out[j * nx + i] = line[j];
                    }
                }
            }
        }
    }

    /// Largest relative residual of the discrete march equations.
    pub fn residual(&mut self, rho31: [&[C64]; 4], inflow: Option<&[C64]>, probes: [&[C64]; 4]) -> f64 {
        let n = self.mesh.len();
        let mut fresh: Vec<Vec<C64>> = (0..4).map(|_| vec![ZERO; n]).collect();
        {
            let [a, b, c, d] = &mut fresh[..] else { unreachable!() };
            self.solve(rho31, inflow, [a, b, c, d]);
        }
        let mut worst: f64 = 0.0;
        for (f, p) in fresh.iter().zip(probes) {
            let scale = f.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1e-300);
            let diff = f.iter().zip(p).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            worst = worst.max(diff / scale);
        }
        worst
    }
}

/// Time-resolved probe propagation: θ-weighted Preissmann box scheme for
/// (1/c)∂_t ± ∂ = iηρ31, exact translation at unit Courant number, followed
/// by Crank–Nicolson diffraction sweeps in x and y (Dirichlet zero).
#[derive(Clone, Debug)]
pub struct ProbePropagator {
    mesh: Mesh,
    dt: f64,
    eta: f64,
    advection: bool,
    sweep_x: Option<(C64, Factored)>,
    sweep_y: Option<(C64, Factored)>,
    line: Vec<C64>,
}

impl ProbePropagator {
    pub fn new(mesh: Mesh, eta: f64, k: f64, dt: f64, diffraction: bool, advection: bool) -> Result<Self, ObeError> {
        let sweep = |d: f64, n: usize| -> Result<Option<(C64, Factored)>, ObeError> {
            if !diffraction || n < 2 {
                return Ok(None);
            }
            let mu = I * (C_LIGHT * dt / (4.0 * k * d * d));
            Ok(Some((mu, Factored::constant(n, -mu, 1.0 + 2.0 * mu, -mu).ok_or(ObeError::Solve)?)))
        };
        Ok(ProbePropagator {
            mesh,
            dt,
            eta,
            advection,
            sweep_x: sweep(mesh.dx, mesh.nx)?,
            sweep_y: sweep(mesh.dy, mesh.ny)?,
            line: vec![ZERO; mesh.nx.max(mesh.ny)],
        })
    }

    /// Advances one probe from t to t + dt. `rho_old`/`rho_new` are ρ31 at
    /// the two time levels; `inflow` is the new upstream boundary row.
    pub fn advance(&mut self, beam: Beam, probe: &mut [C64], rho_old: &[C64], rho_new: &[C64], inflow: Option<&[C64]>) {
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        if self.advection {
            let (h, n_along, n_perp, forward) = match beam {
                Beam::Forward => (self.mesh.dy, ny, nx, true),
                Beam::Backward => (self.mesh.dy, ny, nx, false),
                Beam::Rightward => (self.mesh.dx, nx, ny, true),
                Beam::Leftward => (self.mesh.dx, nx, ny, false),
            };
            let along_y = matches!(beam, Beam::Forward | Beam::Backward);
            let idx = |s: usize, q: usize| -> usize {
                let a = if forward { s } else { n_along - 1 - s };
                if along_y {
                    a * nx + q
                } else {
                    q * nx + a
                }
            };
            let sigma = h / (C_LIGHT * self.dt);
            // θ = ½ (exact translation at σ = 1) loses its damping of the
            // checkerboard-in-time mode as σ → 0; lean implicit there
            let theta = if sigma >= 1.0 { 0.5 } else { 1.0 - 0.5 * sigma };
            let src = I * (self.eta * h);
            let old: Vec<C64> = probe.to_vec();
            for q in 0..n_perp {
                probe[idx(0, q)] = inflow.map_or(ZERO, |v| v[q]);
                for s in 1..n_along {
                    let (p, c) = (idx(s - 1, q), idx(s, q));
                    let rhs = probe[p] * (2.0 * theta - sigma) + sigma * (old[c] + old[p]) - 2.0 * (1.0 - theta) * (old[c] - old[p])
                        + src * (theta * (rho_new[c] + rho_new[p]) + (1.0 - theta) * (rho_old[c] + rho_old[p]));
                    probe[c] = rhs / (2.0 * theta + sigma);
                }
            }
        } else {
            // static envelope: ∂_t Ω = c(iηρ31) only
            for (p, (a, b)) in probe.iter_mut().zip(rho_old.iter().zip(rho_new)) {
                *p += I * (0.5 * self.eta * C_LIGHT * self.dt) * (a + b);
            }
        }
        if let Some((mu, fac)) = &self.sweep_x {
            for j in 0..ny {
                let row = &mut probe[j * nx..(j + 1) * nx];
                let line = &mut self.line[..nx];
                for i in 0..nx {
                    let l = if i > 0 { row[i - 1] } else { ZERO };
                    let r = if i + 1 < nx { row[i + 1] } else { ZERO };
                    line[i] = row[i] + mu * (l - 2.0 * row[i] + r);
                }
                fac.solve(line);
                row.copy_from_slice(line);
            }
        }
        if let Some((mu, fac)) = &self.sweep_y {
            let line = &mut self.line[..ny];
            for i in 0..nx {
                for j in 0..ny {
                    let c = probe[j * nx + i];
                    let d = if j > 0 { probe[(j - 1) * nx + i] } else { ZERO };
                    let u = if j + 1 < ny { probe[(j + 1) * nx + i] } else { ZERO };
                    line[j] = c + mu * (d - 2.0 * c + u);
                }
                fac.solve(line);
                for j in 0..ny {
                    probe[j * nx + i] = line[j];
                }
            }
        }
    }
}

/// Atomic unknowns (ρ21, ρ31^F..L) as flat buffers.
#[derive(Clone, Debug)]
struct Atoms {
    r21: Vec<C64>,
    r31: [Vec<C64>; 4],
}

impl Atoms {
    fn zeros(n: usize) -> Self {
        Atoms { r21: vec![ZERO; n], r31: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]] }
    }

    fn copy_from(&mut self, o: &Atoms) {
        self.r21.copy_from_slice(&o.r21);
        for b in 0..4 {
            self.r31[b].copy_from_slice(&o.r31[b]);
        }
    }
}

/// Stepper owning the work buffers for one grid and schedule.
#[derive(Clone, Debug)]
pub struct ObeSolver {
    pub mesh: Mesh,
    pub schedule: DriveSchedule,
    pub config: SolverConfig,
    pub dt: f64,
    gamma: f64,
    marcher: ProbeMarcher,
    propagator: Option<ProbePropagator>,
    drives: ColumnDrives,
    inflow: Vec<C64>,
    injection: Vec<C64>,
    probes: [Vec<C64>; 4],
    base: Atoms,
    tmp: Atoms,
    old31: [Vec<C64>; 4],
}

impl ObeSolver {
    pub fn new(mesh: Mesh, schedule: DriveSchedule, config: SolverConfig, dt: f64) -> Result<Self, ObeError> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(ObeError::Config("dt must be positive".into()));
        }
        if config.snapshot_stride == 0 {
            return Err(ObeError::Config("snapshot stride must be at least 1".into()));
        }
        if config.tolerance.is_nan() || config.tolerance <= 0.0 {
            return Err(ObeError::Config("tolerance must be positive".into()));
        }
        if config.probe_mode == ProbeMode::TimeResolved && config.splitting == Splitting::Coupled {
            return Err(ObeError::Config("time-resolved probes need atoms-first or strang splitting".into()));
        }
        if mesh.ny < 2 {
            return Err(ObeError::Config("the OBE solver needs a 2D grid".into()));
        }
        if config.probe_mode == ProbeMode::TimeResolved && config.write_dt.is_some() {
            return Err(ObeError::Config("a coarse write step needs quasi-static probes".into()));
        }
        // three or more fine steps per coarse step amplify transients at the exit face
        if config.write_dt.is_some_and(|w| (w / dt).round() > 2.0) {
            return Err(ObeError::Config("write step may be at most 2 dt".into()));
        }
        let p = schedule.params;
        let eta = schedule.consts.eta;
        let k = p.wavenumber();
        let marcher = ProbeMarcher::new(mesh, eta, k, config.diffraction)?;
        let propagator = match config.probe_mode {
            ProbeMode::TimeResolved => Some(ProbePropagator::new(mesh, eta, k, dt, config.diffraction, config.advection)?),
            ProbeMode::QuasiStatic => None,
        };
        let n = mesh.len();
        let injection = (0..mesh.nx).map(|i| C64::new(schedule.injection(mesh.x(i)), 0.0)).collect();
        Ok(ObeSolver {
            mesh,
            schedule,
            config,
            dt,
            gamma: p.gamma,
            marcher,
            propagator,
            drives: ColumnDrives::default(),
            inflow: vec![ZERO; mesh.nx],
            injection,
            probes: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]],
            base: Atoms::zeros(n),
            tmp: Atoms::zeros(n),
            old31: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]],
        })
    }

    fn inflow_at(&mut self, env: f64) -> Option<&[C64]> {
        if !self.config.inject_forward {
            return None;
        }
        for (o, v) in self.inflow.iter_mut().zip(&self.injection) {
            *o = v * env;
        }
        Some(&self.inflow)
    }

    /// Quasi-static probes for the given ρ31 at time t, written into `self.probes`.
    fn solve_probes_from_state(&mut self, state: &SimState, t: f64) {
        let env = self.schedule.probe_envelope(t);
        let r = [&state.rho31[0].data[..], &state.rho31[1].data[..], &state.rho31[2].data[..], &state.rho31[3].data[..]];
        quasi_static(&mut self.marcher, &mut self.probes, &mut self.inflow, &self.injection, self.config.inject_forward, env, r);
    }

    /// Right-hand side of the atomic equations at `y` with probes from
    /// `probes`, fused with the RK4 bookkeeping: `acc += w·k` and, when
    /// `next_c` is given, `y ← base + next_c·k` in place.
    #[allow(clippy::too_many_arguments)]
    fn stage(
        drives: &ColumnDrives,
        gamma: f64,
        nx: usize,
        y: &mut Atoms,
        probes: &[Vec<C64>; 4],
        base: &Atoms,
        acc: &mut [&mut [C64]; 5],
        w: f64,
        next_c: Option<f64>,
    ) {
        let dp = drives.delta_p;
        let decay = C64::new(0.5 * gamma, dp);
        let half_i = C64::new(0.0, 0.5);
        let n = y.r21.len();
        let [cf, cb, cr, cl] = &drives.control;
        let dc = &drives.delta_c;
        let c = next_c.unwrap_or(0.0);
        let [y31f, y31b, y31r, y31l] = &mut y.r31;
        let y21 = &mut y.r21;
        let [pf, pb, pr, pl] = probes;
        for row in 0..n / nx {
            let o = row * nx;
            for i in 0..nx {
                let p = o + i;
                let oc = [cf[i], cb[i], cr[i], cl[i]];
                let r21 = y21[p];
                let r31 = [y31f[p], y31b[p], y31r[p], y31l[p]];
                let coup = oc[0] * r31[0] + oc[1] * r31[1] + oc[2] * r31[2] + oc[3] * r31[3];
                let k = [
                    half_i * coup + C64::new(0.0, dc[i] - dp) * r21,
                    half_i * (pf[p] + oc[0] * r21) - decay * r31[0],
                    half_i * (pb[p] + oc[1] * r21) - decay * r31[1],
                    half_i * (pr[p] + oc[2] * r21) - decay * r31[2],
                    half_i * (pl[p] + oc[3] * r21) - decay * r31[3],
                ];
                for f in 0..5 {
                    acc[f][p] += k[f] * w;
                }
                if next_c.is_some() {
                    y21[p] = base.r21[p] + k[0] * c;
                    y31f[p] = base.r31[0][p] + k[1] * c;
                    y31b[p] = base.r31[1][p] + k[2] * c;
                    y31r[p] = base.r31[2][p] + k[3] * c;
                    y31l[p] = base.r31[3][p] + k[4] * c;
                }
            }
        }
    }

    /// One RK4 step of the atoms over `h` from `t`. With `coupled`, probes
    /// are re-solved from each stage's ρ31; otherwise `self.probes` is frozen.
    fn rk4(&mut self, state: &mut SimState, t: f64, h: f64, coupled: bool) {
        let nx = self.mesh.nx;
        self.base.r21.copy_from_slice(&state.rho21.data);
        for b in 0..4 {
            self.base.r31[b].copy_from_slice(&state.rho31[b].data);
        }
        self.tmp.copy_from(&self.base);
        let stage_t = [t, t + 0.5 * h, t + 0.5 * h, t + h];
        let weight = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
        let [f, b, r, l] = &mut state.rho31;
        let mut acc: [&mut [C64]; 5] = [&mut state.rho21.data, &mut f.data, &mut b.data, &mut r.data, &mut l.data];
        for s in 0..4 {
            let nc = if s == 2 { Some(h) } else if s == 0 || s == 1 { Some(0.5 * h) } else { None };
            self.schedule.fill_columns(&self.mesh, stage_t[s], &mut self.drives);
            if coupled {
                let env = self.schedule.probe_envelope(stage_t[s]);
                let r = [&self.tmp.r31[0][..], &self.tmp.r31[1][..], &self.tmp.r31[2][..], &self.tmp.r31[3][..]];
                quasi_static(&mut self.marcher, &mut self.probes, &mut self.inflow, &self.injection, self.config.inject_forward, env, r);
            }
            Self::stage(&self.drives, self.gamma, nx, &mut self.tmp, &self.probes, &self.base, &mut acc, weight[s], nc);
        }
    }

    fn load_probes(&mut self, state: &SimState) {
        for b in 0..4 {
            self.probes[b].copy_from_slice(&state.probe[b].data);
        }
    }

    fn store_probes(&self, state: &mut SimState) {
        for b in 0..4 {
            state.probe[b].data.copy_from_slice(&self.probes[b]);
        }
    }

    /// Probe update to time `t` given atoms before (`old31`) and now (state).
    fn update_probes(&mut self, state: &mut SimState, t: f64, h: f64) {
        match self.config.probe_mode {
            ProbeMode::QuasiStatic => self.solve_probes_from_state(state, t),
            ProbeMode::TimeResolved => {
                let env = self.schedule.probe_envelope(t);
                let _ = h;
                let inflow: Option<Vec<C64>> = self.inflow_at(env).map(|v| v.to_vec());
                let prop = self.propagator.as_mut().expect("time-resolved propagator");
                for beam in Beam::ALL {
                    let b = beam.index();
                    let inflow = if beam == Beam::Forward { inflow.as_deref() } else { None };
                    prop.advance(beam, &mut self.probes[b], &self.old31[b], &state.rho31[b].data, inflow);
                }
            }
        }
    }

    fn save_old31(&mut self, state: &SimState) {
        for b in 0..4 {
            self.old31[b].copy_from_slice(&state.rho31[b].data);
        }
    }

    /// Advances the atoms one RK4 step with the probes held fixed.
    pub fn advance_atoms(&mut self, state: &mut SimState, h: f64) {
        self.load_probes(state);
        let t = state.t;
        self.rk4(state, t, h, false);
    }

    /// Advances the probes over `h` with the atoms held fixed (both time
    /// levels see the current ρ31).
    pub fn advance_probes(&mut self, state: &mut SimState, h: f64) {
        self.load_probes(state);
        self.save_old31(state);
        let t = state.t + h;
        self.update_probes(state, t, h);
        self.store_probes(state);
    }

    pub fn step(&mut self, state: &mut SimState) {
        let h = self.dt;
        self.step_by(state, h);
    }

    /// One splitting step of length `h` (quasi-static probes only when
    /// `h` differs from the configured dt).
    pub fn step_by(&mut self, state: &mut SimState, h: f64) {
        let t = state.t;
        match self.config.splitting {
            Splitting::Coupled => {
                self.rk4(state, t, h, true);
                self.solve_probes_from_state(state, t + h);
            }
            Splitting::AtomsFirst => {
                self.load_probes(state);
                self.save_old31(state);
                self.rk4(state, t, h, false);
                self.update_probes(state, t + h, h);
            }
            Splitting::Strang => {
                self.load_probes(state);
                self.rk4(state, t, 0.5 * h, false);
                self.save_old31(state);
                self.update_probes(state, t + 0.5 * h, h);
                self.rk4(state, t + 0.5 * h, 0.5 * h, false);
            }
        }
        self.store_probes(state);
        state.t = t + h;
    }

    /// Relative residual of the quasi-static probe equations for `state`.
    pub fn probe_residual(&mut self, state: &SimState) -> f64 {
        let env = self.schedule.probe_envelope(state.t);
        let inflow: Option<Vec<C64>> = self.inflow_at(env).map(|v| v.to_vec());
        let r = [&state.rho31[0].data[..], &state.rho31[1].data[..], &state.rho31[2].data[..], &state.rho31[3].data[..]];
        let p = [&state.probe[0].data[..], &state.probe[1].data[..], &state.probe[2].data[..], &state.probe[3].data[..]];
        self.marcher.residual(r, inflow.as_deref(), p)
    }

    /// Dominant eigenvalue of the homogeneous coupled atom Jacobian at
    /// time t, by power iteration. RK4 is stable for dt·|λ| ≲ 2.7.
    pub fn stiffness(&mut self, t: f64, iterations: usize) -> C64 {
        let n = self.mesh.len();
        let nx = self.mesh.nx;
        let mut v = Atoms::zeros(n);
        let mut seed = 0x2545_f491_4f6c_dd1du64;
        let mut rnd = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for f in std::iter::once(&mut v.r21).chain(v.r31.iter_mut()) {
            for z in f.iter_mut() {
                *z = C64::new(rnd(), rnd());
            }
        }
        self.schedule.fill_columns(&self.mesh, t, &mut self.drives);
        let dot = |a: &Atoms, b: &Atoms| -> C64 {
            let mut s: C64 = a.r21.iter().zip(&b.r21).map(|(x, y)| x.conj() * y).sum();
            for f in 0..4 {
                s += a.r31[f].iter().zip(&b.r31[f]).map(|(x, y)| x.conj() * y).sum::<C64>();
            }
            s
        };
        let mut out = Atoms::zeros(n);
        let mut lam = ZERO;
        for _ in 0..iterations {
            let nv = dot(&v, &v).re.sqrt();
            let s = 1.0 / nv;
            for f in std::iter::once(&mut v.r21).chain(v.r31.iter_mut()) {
                for z in f.iter_mut() {
                    *z *= s;
                }
            }
            let r = [&v.r31[0][..], &v.r31[1][..], &v.r31[2][..], &v.r31[3][..]];
            quasi_static(&mut self.marcher, &mut self.probes, &mut self.inflow, &self.injection, false, 0.0, r);
            for f in std::iter::once(&mut out.r21).chain(out.r31.iter_mut()) {
                f.fill(ZERO);
            }
            {
                let [a, b, c, d] = &mut out.r31;
                let mut acc: [&mut [C64]; 5] = [&mut out.r21, a, b, c, d];
                let base = Atoms::zeros(0);
                Self::stage(&self.drives, self.gamma, nx, &mut v, &self.probes, &base, &mut acc, 1.0, None);
            }
            lam = dot(&v, &out);
            std::mem::swap(&mut v, &mut out);
        }
        lam
    }
}

fn quasi_static(
    marcher: &mut ProbeMarcher,
    probes: &mut [Vec<C64>; 4],
    inflow: &mut [C64],
    injection: &[C64],
    inject: bool,
    env: f64,
    r31: [&[C64]; 4],
) {
    let inflow = if inject {
        for (o, v) in inflow.iter_mut().zip(injection) {
            *o = v * env;
        }
        Some(&inflow[..])
    } else {
        None
    };
    let [p0, p1, p2, p3] = probes;
    marcher.solve(r31, inflow, [p0, p1, p2, p3]);
}

/// One RK4 atom step with frozen probes (allocating convenience wrapper).
pub fn advance_atoms_rk4(state: &SimState, schedule: &DriveSchedule, dt: f64) -> Result<SimState, ObeError> {
    let cfg = SolverConfig { splitting: Splitting::AtomsFirst, ..SolverConfig::default() };
    let mut solver = ObeSolver::new(state.mesh(), schedule.clone(), cfg, dt)?;
    let mut s = state.clone();
    solver.advance_atoms(&mut s, dt);
    if !s.is_finite() {
        return Err(ObeError::Divergence { step: 1, t: s.t });
    }
    Ok(s)
}

/// One probe step with frozen atoms, in the mode selected by `cfg`.
pub fn advance_probes_cn(state: &SimState, schedule: &DriveSchedule, dt: f64, cfg: &SolverConfig) -> Result<SimState, ObeError> {
    let cfg = SolverConfig {
        splitting: if cfg.splitting == Splitting::Coupled { Splitting::AtomsFirst } else { cfg.splitting },
        ..*cfg
    };
    let mut solver = ObeSolver::new(state.mesh(), schedule.clone(), cfg, dt)?;
    let mut s = state.clone();
    solver.advance_probes(&mut s, dt);
    if !s.is_finite() {
        return Err(ObeError::Solve);
    }
    Ok(s)
}

pub fn step(state: &SimState, schedule: &DriveSchedule, cfg: &SolverConfig, dt: f64) -> Result<SimState, ObeError> {
    let mut solver = ObeSolver::new(state.mesh(), schedule.clone(), *cfg, dt)?;
    let mut s = state.clone();
    solver.step(&mut s);
    if !s.is_finite() {
        return Err(ObeError::Divergence { step: 1, t: s.t });
    }
    Ok(s)
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub grid: GridSpec,
    pub schedule: DriveSchedule,
    pub solver: SolverConfig,
    pub initial: Option<SimState>,
}

impl Scenario {
    pub fn new(grid: GridSpec, schedule: DriveSchedule) -> Self {
        Scenario { grid, schedule, solver: SolverConfig::default(), initial: None }
    }
}

fn frame_of(state: &SimState, keep: bool) -> Frame {
    let mut f = Frame::new(state.t, state.rho21.clone());
    if keep {
        f.state = Some(Box::new(state.clone()));
    }
    f
}

/// Integrates from the initial state (vacuum by default) to `grid.t_end`,
/// collecting a frame every `snapshot_stride` steps.
pub fn run(sc: &Scenario) -> Result<TimeSeries, RunFailure> {
    let keep = sc.solver.keep_full_state;
    let mut series = TimeSeries::new();
    match run_with(sc, |s| {
        series.push(frame_of(s, keep));
        Ok(())
    }) {
        Ok(_) => Ok(series),
        Err((error, last_good)) => Err(RunFailure { error, series, last_good }),
    }
}

/// Like [`run`], handing each snapshot state to `sink` instead of keeping it.
/// Returns the final state; on failure, the error and the last finite state.
pub fn run_with(
    sc: &Scenario,
    mut sink: impl FnMut(&SimState) -> Result<(), ObeError>,
) -> Result<SimState, (ObeError, Option<Box<SimState>>)> {
    let mesh = sc.grid.mesh();
    let mut solver = ObeSolver::new(mesh, sc.schedule.clone(), sc.solver, sc.grid.dt).map_err(|e| (e, None))?;
    let mut state = sc.initial.clone().unwrap_or_else(|| SimState::vacuum(mesh));
    if !state.mesh().same_shape(&mesh) {
        return Err((ObeError::Config("initial state does not match the grid".into()), None));
    }
    let stride = sc.solver.snapshot_stride;
    let dt = sc.grid.dt;
    let t0 = state.t;
    let steps = ((sc.grid.t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let coarse = sc.solver.write_dt.map(|w| (w / dt).round().max(1.0) as usize).unwrap_or(1);
    let t_switch = sc.schedule.retrieval_start();
    sink(&state).map_err(|e| (e, Some(Box::new(state.clone()))))?;
    let mut last_good = state.clone();
    let mut n = 0;
    while n < steps {
        let m = if coarse > 1 && t0 + (n + coarse) as f64 * dt <= t_switch && n + coarse <= steps { coarse } else { 1 };
        solver.step_by(&mut state, m as f64 * dt);
        let before = n;
        n += m;
        state.t = t0 + n as f64 * dt;
        let snap = n / stride > before / stride || n == steps;
        if snap || n / 64 > before / 64 {
            if !state.is_finite() {
                return Err((ObeError::Divergence { step: n, t: state.t }, Some(Box::new(last_good))));
            }
            last_good.clone_from(&state);
        }
        if snap {
            if sc.solver.probe_mode == ProbeMode::QuasiStatic && sc.solver.splitting != Splitting::Strang {
                let r = solver.probe_residual(&state);
                if r > sc.solver.tolerance {
                    return Err((ObeError::Residual { t: state.t, residual: r }, Some(Box::new(last_good))));
                }
            }
            sink(&state).map_err(|e| (e, Some(Box::new(state.clone()))))?;
        }
    }
    Ok(state)
}

/// ‖Ω_p^d + Ω_c^d ρ21‖ / ‖Ω_c^d ρ21‖ for one beam, over the whole grid.
pub fn dark_state_residual(state: &SimState, schedule: &DriveSchedule, beam: Beam) -> f64 {
    let mesh = state.mesh();
    let d = schedule.columns(&mesh, state.t);
    let b = beam.index();
    let (mut num, mut den) = (0.0, 0.0);
    for (p, (op, r)) in state.probe[b].data.iter().zip(&state.rho21.data).enumerate() {
        let oc = d.control[b][p % mesh.nx];
        num += (op + oc * r).norm_sqr();
        den += (oc * r).norm_sqr();
    }
    if den == 0.0 {
        return f64::INFINITY;
    }
    (num / den).sqrt()
}

/// True for recipes whose retrieval stage runs all four beams.
pub fn uses_counter_propagating_y(s: &DriveSchedule) -> bool {
    matches!(s.recipe, Recipe::Landau(_) | Recipe::Uniform(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drives::{landau_schedule, uniform_schedule, LandauTiming, ProbePulse};
    use crate::model::{derive_constants, PhysParams};

    fn mesh() -> Mesh {
        Mesh::centered(9, 5, 1e-3, 1e-3)
    }

    /// Early write stage of the uniform recipe with every drive, source and
    /// probe switched off; tests switch individual terms back on.
    fn bare(mesh: &Mesh) -> DriveSchedule {
        let p = PhysParams::landau_reference();
        let c = derive_constants(&p, None).unwrap();
        let mut s = uniform_schedule(&p, &c, 0, 0.0, LandauTiming::default(), mesh).unwrap();
        s.params.omega_c = 0.0;
        s.params.delta_p_storage = 0.0;
        s.consts.eta = 0.0;
        s.probe = ProbePulse::OFF;
        s
    }

    fn filled(mesh: Mesh, r21: C64, r31f: C64) -> SimState {
        let mut s = SimState::vacuum(mesh);
        s.rho21.data.fill(r21);
        s.rho31[0].data.fill(r31f);
        s
    }

    #[test]
    fn optical_coherence_decays_analytically() {
        let m = mesh();
        let mut s = bare(&m);
        s.params.delta_p_storage = 0.3e6;
        let c0 = C64::new(0.3, -0.2);
        let dt = 1e-7;
        let out = advance_atoms_rk4(&filled(m, ZERO, c0), &s, dt).unwrap();
        let exact = c0 * (-(C64::new(0.5e6, 0.3e6)) * dt).exp();
        // local error of RK4 is (z⁵/120)|c0| with z = |Γ/2 + iΔ|dt
        let z: f64 = C64::new(0.5e6, 0.3e6).norm() * dt;
        let bound = z.powi(5) / 120.0 * c0.norm() * 1.01;
        for v in &out.rho31[0].data {
            assert!((v - exact).norm() <= bound, "{} > {bound}", (v - exact).norm());
        }
        assert!(out.probe.iter().all(|p| p.max_abs() == 0.0));
    }

    #[test]
    fn resonant_spin_coherence_is_frozen() {
        let m = mesh();
        let s = bare(&m);
        let st = filled(m, C64::new(0.01, 0.02), ZERO);
        let out = advance_atoms_rk4(&st, &s, 1e-7).unwrap();
        assert_eq!(out.rho21, st.rho21);
    }

    #[test]
    fn two_level_rabi_oscillation() {
        let m = mesh();
        let mut s = bare(&m);
        let omega = 2e6;
        s.params.omega_c = omega;
        s.params.gamma = 0.0;
        let cfg = SolverConfig { splitting: Splitting::AtomsFirst, inject_forward: false, ..SolverConfig::default() };
        let dt = 2e-9;
        let mut solver = ObeSolver::new(m, s, cfg, dt).unwrap();
        let mut st = filled(m, C64::new(1e-3, 0.0), ZERO);
        let period = 4.0 * std::f64::consts::PI / omega;
        let steps = (period / dt).round() as usize;
        for k in 1..=steps {
            solver.step(&mut st);
            if k % 157 == 0 || k == steps {
                let t = k as f64 * dt;
                let a = 1e-3 * (0.5 * omega * t).cos();
                let b = 1e-3 * (0.5 * omega * t).sin();
                assert!((st.rho21.at(4, 2) - C64::new(a, 0.0)).norm() < 1e-9, "t = {t}");
                assert!((st.rho31[0].at(4, 2) - C64::new(0.0, b)).norm() < 1e-9, "t = {t}");
            }
        }
    }

    #[test]
    fn rk4_self_convergence_order() {
        let m = mesh();
        let mut s = bare(&m);
        s.params.omega_c = 1.5e6;
        s.params.delta_p_storage = 0.8e6;
        let cfg = SolverConfig { splitting: Splitting::AtomsFirst, inject_forward: false, ..SolverConfig::default() };
        let t_end = 2e-6;
        let run = |h: f64| {
            let mut solver = ObeSolver::new(m, s.clone(), cfg, h).unwrap();
            let mut st = filled(m, C64::new(1e-3, 0.0), C64::new(0.0, 2e-4));
            for _ in 0..(t_end / h).round() as usize {
                solver.step(&mut st);
            }
            (st.rho21.at(4, 2), st.rho31[0].at(4, 2))
        };
        let h = 1e-7;
        let reference = run(h / 16.0);
        let err = |r: (C64, C64)| (r.0 - reference.0).norm() + (r.1 - reference.1).norm();
        let (e1, e2) = (err(run(h)), err(run(h / 2.0)));
        let order = (e1 / e2).log2();
        assert!(order >= 3.8, "order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn box_scheme_translates_at_unit_courant() {
        let m = Mesh::centered(3, 61, 1e-4, 1e-4);
        let dt = m.dy / C_LIGHT;
        let mut prop = ProbePropagator::new(m, 0.0, 1.26e7, dt, false, true).unwrap();
        let gauss = |y: f64| C64::new((-(y / 5e-4).powi(2)).exp(), 0.0);
        let field = ComplexField2D::from_fn(m, |_, y| gauss(y));
        let mut p = field.data.clone();
        let zero = vec![ZERO; m.len()];
        for _ in 0..10 {
            prop.advance(Beam::Forward, &mut p, &zero, &zero, None);
        }
        for j in 10..m.ny {
            for i in 0..m.nx {
                assert!((p[j * m.nx + i] - field.data[(j - 10) * m.nx + i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn box_scheme_moves_at_light_speed() {
        let m = Mesh::centered(1, 201, 1e-4, 1e-4);
        let dt = 0.5 * m.dy / C_LIGHT;
        let mut prop = ProbePropagator::new(m, 0.0, 1.26e7, dt, false, true).unwrap();
        let y0 = -3e-3;
        let mut p: Vec<C64> = (0..m.ny).map(|j| C64::new((-((m.y(j) - y0) / 6e-4).powi(2)).exp(), 0.0)).collect();
        let zero = vec![ZERO; m.len()];
        let steps = 40;
        for _ in 0..steps {
            prop.advance(Beam::Forward, &mut p, &zero, &zero, None);
        }
        let w: f64 = p.iter().map(|z| z.norm_sqr()).sum();
        let centroid = p.iter().enumerate().map(|(j, z)| m.y(j) * z.norm_sqr()).sum::<f64>() / w;
        let expect = y0 + C_LIGHT * dt * steps as f64;
        assert!((centroid - expect).abs() < 0.02 * (expect - y0), "{centroid} vs {expect}");
        let peak = p.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        assert!((peak - 1.0).abs() < 0.02, "peak {peak}");
    }

    #[test]
    fn static_envelope_diffracts_like_a_gaussian_beam() {
        let m = Mesh::centered(121, 121, 3e-5, 3e-5);
        let k = 1.26e7;
        let w0 = 3e-4;
        let z_r = 0.5 * k * w0 * w0;
        let steps = 200;
        let dt = z_r / C_LIGHT / steps as f64;
        let mut prop = ProbePropagator::new(m, 0.0, k, dt, true, false).unwrap();
        let mut p = ComplexField2D::from_fn(m, |x, y| C64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)).data;
        let zero = vec![ZERO; m.len()];
        for _ in 0..steps {
            prop.advance(Beam::Forward, &mut p, &zero, &zero, None);
        }
        // intensity ∝ exp(−2x²/w²) ⇒ ⟨x²⟩ = w²/4
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..m.ny {
            for i in 0..m.nx {
                let v = p[j * m.nx + i].norm_sqr();
                num += m.x(i).powi(2) * v;
                den += v;
            }
        }
        let w = 2.0 * (num / den).sqrt();
        let expect = w0 * 2f64.sqrt();
        assert!((w / expect - 1.0).abs() < 0.01, "w = {w:e}, expected {expect:e}");
    }

    #[test]
    fn static_envelope_source_growth() {
        let m = mesh();
        let eta = 5e10;
        let dt = 1e-12;
        let mut prop = ProbePropagator::new(m, eta, 1.26e7, dt, false, false).unwrap();
        let c0 = C64::new(1e-6, 2e-6);
        let r = vec![c0; m.len()];
        let mut p = vec![ZERO; m.len()];
        prop.advance(Beam::Forward, &mut p, &r, &r, None);
        let expect = I * eta * c0 * C_LIGHT * dt;
        assert!((p[m.len() / 2] - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn quasi_static_march_integrates_the_source() {
        let m = Mesh::centered(5, 41, 1e-4, 1e-4);
        let eta = 5e10;
        let mut marcher = ProbeMarcher::new(m, eta, 1.26e7, false).unwrap();
        let c0 = C64::new(0.0, 3e-9);
        let r = vec![c0; m.len()];
        let mut out: Vec<Vec<C64>> = (0..4).map(|_| vec![ZERO; m.len()]).collect();
        {
            let [a, b, c, d] = &mut out[..] else { unreachable!() };
            marcher.solve([&r, &r, &r, &r], None, [a, b, c, d]);
        }
        for j in 0..m.ny {
            let f = out[0][j * m.nx + 2];
            let b = out[1][j * m.nx + 2];
            let expect_f = I * eta * c0 * (m.y(j) - m.y_min);
            let expect_b = I * eta * c0 * (m.y_max() - m.y(j));
            assert!((f - expect_f).norm() < 1e-12 * (1.0 + expect_f.norm()));
            assert!((b - expect_b).norm() < 1e-12 * (1.0 + expect_b.norm()));
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let m = mesh();
        let s = bare(&m);
        let st = SimState::vacuum(m);
        for splitting in [Splitting::Coupled, Splitting::AtomsFirst, Splitting::Strang] {
            let cfg = SolverConfig { splitting, ..SolverConfig::default() };
            let out = step(&st, &s, &cfg, 1e-7).unwrap();
            assert!(out.fields().iter().all(|(_, f)| f.max_abs() == 0.0));
            assert_eq!(out.t, 1e-7);
        }
    }

    #[test]
    fn dark_stored_coherence_keeps_its_norm() {
        let m = mesh();
        let s = bare(&m);
        let st = filled(m, C64::new(0.02, -0.01), ZERO);
        let out = step(&st, &s, &SolverConfig::default(), 1e-7).unwrap();
        assert!((out.rho21.norm() / st.rho21.norm() - 1.0).abs() < 1e-6);
    }

    fn write_stage(peak_scale: f64) -> (Scenario, SimState) {
        let p = PhysParams::landau_reference();
        let c = derive_constants(&p, None).unwrap();
        let grid = GridSpec::centered(45, 41, 2e-4, 2e-4, 8e-8, 6e-5);
        let mut s = landau_schedule(&p, &c, 0, 0.0, 0.0, LandauTiming::default(), &grid.mesh()).unwrap();
        s.probe.peak *= peak_scale;
        let mut sc = Scenario::new(grid, s);
        sc.solver.diffraction = true;
        sc.solver.snapshot_stride = 750;
        let end = run_with(&sc, |_| Ok(())).unwrap();
        (sc, end)
    }

    #[test]
    fn linear_in_probe_strength() {
        let (_, a) = write_stage(1.0);
        let (_, b) = write_stage(2.0);
        for ((_, fa), (_, fb)) in a.fields().iter().zip(b.fields()) {
            let scale = fb.max_abs();
            let dev = fa.data.iter().zip(&fb.data).fold(0.0f64, |m, (x, y)| m.max((2.0 * x - y).norm()));
            assert!(dev <= 1e-10 * scale, "{dev:e} vs {scale:e}");
        }
        assert!(b.rho21.max_abs() > 0.0 && b.probe[0].max_abs() > 0.0);
    }

    #[test]
    fn splittings_agree_over_a_hundred_steps() {
        let (sc, start) = write_stage(1.0);
        let advance = |splitting| {
            let cfg = SolverConfig { splitting, ..sc.solver };
            let mut solver = ObeSolver::new(start.mesh(), sc.schedule.clone(), cfg, sc.grid.dt).unwrap();
            let mut s = start.clone();
            for _ in 0..100 {
                solver.step(&mut s);
            }
            s
        };
        let a = advance(Splitting::AtomsFirst);
        let b = advance(Splitting::Strang);
        let c = advance(Splitting::Coupled);
        let rel = |x: &SimState, y: &SimState| x.rho21.sub(&y.rho21).norm() / y.rho21.norm();
        assert!(rel(&a, &b) < 1e-3, "atoms-first vs strang {:e}", rel(&a, &b));
        assert!(rel(&c, &b) < 1e-3, "coupled vs strang {:e}", rel(&c, &b));
    }

    #[test]
    fn time_resolved_probes_agree_with_quasi_static() {
        // the split diffraction sweeps act over c·dt per step, so the modes
        // are compared without diffraction
        let (sc, start) = write_stage(1.0);
        let base = SolverConfig { diffraction: false, ..sc.solver };
        let dt = 1e-8;
        let advance = |cfg: SolverConfig| {
            let mut solver = ObeSolver::new(start.mesh(), sc.schedule.clone(), cfg, dt).unwrap();
            let mut s = start.clone();
            for _ in 0..100 {
                solver.step(&mut s);
            }
            s
        };
        let qs = advance(base);
        let tr = advance(SolverConfig { splitting: Splitting::AtomsFirst, probe_mode: ProbeMode::TimeResolved, ..base });
        let d = qs.rho21.sub(&tr.rho21).norm() / qs.rho21.norm();
        let dp = qs.probe[0].sub(&tr.probe[0]).norm() / qs.probe[0].norm();
        assert!(d < 1e-4, "rho21 {d:e}");
        assert!(dp < 1e-3, "probe {dp:e}");
    }

    #[test]
    fn config_is_validated() {
        let m = mesh();
        let s = bare(&m);
        let bad = [
            SolverConfig { snapshot_stride: 0, ..SolverConfig::default() },
            SolverConfig { tolerance: 0.0, ..SolverConfig::default() },
            SolverConfig { probe_mode: ProbeMode::TimeResolved, ..SolverConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(ObeSolver::new(m, s.clone(), cfg, 1e-7), Err(ObeError::Config(_))));
        }
        assert!(ObeSolver::new(m, s, SolverConfig::default(), 0.0).is_err());
    }
}
