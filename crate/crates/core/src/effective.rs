//! Reference integrator for the effective single-particle equation
//!
//!   iħ ∂_t ψ = [(P + A)²/2m + U − i(Γ/2Δ_p) P²/2m] ψ
//!
//! with A, U taken from the same drive schedule as the atomic solver.
//! Time stepping is Crank–Nicolson in Cayley form; 1D grids are solved
//! directly, 2D grids by ADI-preconditioned fixed-point iteration.

use crate::drives::{synthetic_potentials, DriveSchedule};
use crate::field::{ComplexField2D, Mesh, C64};
use crate::model::{DerivedConsts, HBAR};
use crate::series::{Frame, TimeSeries};
use crate::tridiag;
use thiserror::Error;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EffectiveError {
    #[error("effective mass is undefined (zero probe detuning)")]
    UndefinedMass,
    #[error("linear solve did not converge at t = {t:e} s (relative residual {residual:e})")]
    NoConvergence { t: f64, residual: f64 },
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("non-finite wavefunction at t = {0:e} s")]
    Divergence(f64),
}

/// Discretised H on a mesh. Stencil coefficients are stored per node in
/// rad/s (H/ħ); `lo`/`up` couple to the previous/next node along the axis.
#[derive(Clone, Debug)]
pub struct EffectiveOperator {
    pub mesh: Mesh,
    pub mass: f64,
    /// A per node, kg·m/s
    pub a: [Vec<f64>; 2],
    /// scalar potential per node, J
    pub u: Vec<f64>,
    /// Γ/(2Δ_p)
    pub diffusion: f64,
    pub y_boundary: YBoundary,
    x: Stencil,
    y: Option<Stencil>,
}

/// Edge condition along y. x edges are always hard walls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum YBoundary {
    #[default]
    Wall,
    /// period ny·dy; models an infinitely long strip
    Periodic,
}

#[derive(Clone, Debug)]
struct Stencil {
    lo: Vec<C64>,
    di: Vec<C64>,
    up: Vec<C64>,
}

impl EffectiveOperator {
    pub fn from_parts(
        mesh: Mesh,
        mass: f64,
        a: [Vec<f64>; 2],
        u: Vec<f64>,
        diffusion: f64,
        y_boundary: YBoundary,
    ) -> Result<Self, EffectiveError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(EffectiveError::UndefinedMass);
        }
        let n = mesh.len();
        if a[0].len() != n || a[1].len() != n || u.len() != n {
            return Err(EffectiveError::Grid(format!("potential arrays do not match {}x{}", mesh.nx, mesh.ny)));
        }
        let kin = C64::new(1.0, -diffusion) * (-HBAR / (2.0 * mass));
        let one_d = mesh.is_1d();
        // diagonal potential (A²/2m + U)/ħ, split evenly between the two axes in 2D
        let share = if one_d { 1.0 } else { 0.5 };
        let pot: Vec<f64> =
            (0..n).map(|p| share * ((a[0][p] * a[0][p] + a[1][p] * a[1][p]) / (2.0 * mass) + u[p]) / HBAR).collect();
        let wrap = y_boundary == YBoundary::Periodic;
        let build = |axis: usize, h: f64, len: usize, wrap: bool, idx: &dyn Fn(usize) -> (usize, usize)| {
            let mut s = Stencil { lo: vec![C64::new(0.0, 0.0); n], di: vec![C64::new(0.0, 0.0); n], up: vec![C64::new(0.0, 0.0); n] };
            let k = kin / (h * h);
            // −(i/2m)(A·D + D·A) with central differences
            let c = -I / (2.0 * mass * 2.0 * h);
            for p in 0..n {
                let (pos, stride) = idx(p);
                let av = &a[axis];
                s.di[p] = -2.0 * k + pot[p];
                let span = (len - 1) * stride;
                if pos > 0 {
                    s.lo[p] = k - c * (av[p] + av[p - stride]);
                } else if wrap {
                    s.lo[p] = k - c * (av[p] + av[p + span]);
                }
                if pos + 1 < len {
                    s.up[p] = k + c * (av[p] + av[p + stride]);
                } else if wrap {
                    s.up[p] = k + c * (av[p] + av[p - span]);
                }
            }
            s
        };
        let nx = mesh.nx;
        let x = build(0, mesh.dx, nx, false, &|p| (p % nx, 1));
        let y = (!one_d).then(|| build(1, mesh.dy, mesh.ny, wrap, &|p| (p / nx, nx)));
        Ok(EffectiveOperator { mesh, mass, a, u, diffusion, y_boundary, x, y })
    }

    /// (H/ħ)ψ in rad/s.
    fn apply_rate(&self, psi: &[C64], out: &mut [C64]) {
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let s = &self.x;
        for j in 0..ny {
            let r = j * nx;
            for i in 0..nx {
                let p = r + i;
                let mut v = s.di[p] * psi[p];
                if i > 0 {
                    v += s.lo[p] * psi[p - 1];
                }
                if i + 1 < nx {
                    v += s.up[p] * psi[p + 1];
                }
                out[p] = v;
            }
        }
        if let Some(s) = &self.y {
            let n = nx * ny;
            let wrap = self.y_boundary == YBoundary::Periodic;
            for p in 0..n {
                let mut v = s.di[p] * psi[p];
                if p >= nx {
                    v += s.lo[p] * psi[p - nx];
                } else if wrap {
                    v += s.lo[p] * psi[p + n - nx];
                }
                if p + nx < n {
                    v += s.up[p] * psi[p + nx];
                } else if wrap {
                    v += s.up[p] * psi[p + nx - n];
                }
                out[p] += v;
            }
        }
    }

    /// Hψ in joules.
    pub fn apply(&self, psi: &ComplexField2D) -> ComplexField2D {
        let mut out = ComplexField2D::zeros(self.mesh);
        self.apply_rate(&psi.data, &mut out.data);
        out.scale(C64::new(HBAR, 0.0));
        out
    }

    /// ⟨ψ|H|ψ⟩/⟨ψ|ψ⟩ in joules.
    pub fn rayleigh(&self, psi: &ComplexField2D) -> C64 {
        psi.inner(&self.apply(psi)) / psi.norm_sqr()
    }

    /// |⟨u|Hv⟩ − ⟨Hu|v⟩| relative to ‖u‖‖Hv‖; zero for a Hermitian operator.
    pub fn hermiticity_defect(&self, u: &ComplexField2D, v: &ComplexField2D) -> f64 {
        let hv = self.apply(v);
        let hu = self.apply(u);
        (u.inner(&hv) - hu.inner(v)).norm() / (u.norm() * hv.norm())
    }
}

/// Samples A and U from the schedule at time t. Drives depend on x only, so
/// each column is evaluated once.
pub fn build_operator(
    schedule: &DriveSchedule,
    consts: &DerivedConsts,
    mesh: &Mesh,
    t: f64,
    diffusion: bool,
    y_boundary: YBoundary,
) -> Result<EffectiveOperator, EffectiveError> {
    if !(consts.mass.is_finite() && consts.mass > 0.0) || schedule.params.delta_p == 0.0 {
        return Err(EffectiveError::UndefinedMass);
    }
    let n = mesh.len();
    let (mut ax, mut ay, mut u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..mesh.nx {
        let pot = synthetic_potentials(schedule, consts, mesh.x(i), 0.0, t);
        for j in 0..mesh.ny {
            let p = j * mesh.nx + i;
            ax[p] = pot.a[0];
            ay[p] = pot.a[1];
            u[p] = pot.u;
        }
    }
    let gamma = if diffusion { schedule.params.gamma / (2.0 * schedule.params.delta_p) } else { 0.0 };
    EffectiveOperator::from_parts(*mesh, consts.mass, [ax, ay], u, gamma, y_boundary)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveConfig {
    pub dt: f64,
    pub diffusion: bool,
    pub y_boundary: YBoundary,
    /// relative residual of the implicit solve
    pub tolerance: f64,
    pub max_iterations: usize,
    pub snapshot_stride: usize,
}

impl Default for EffectiveConfig {
    fn default() -> Self {
        EffectiveConfig { dt: 1e-6, diffusion: true, y_boundary: YBoundary::Wall, tolerance: 1e-12, max_iterations: 200, snapshot_stride: 10 }
    }
}

/// Holds scratch buffers so repeated steps do not allocate.
pub struct EffectiveSolver {
    pub schedule: DriveSchedule,
    pub consts: DerivedConsts,
    pub config: EffectiveConfig,
    mesh: Mesh,
    b: Vec<C64>,
    r: Vec<C64>,
    tmp: Vec<C64>,
    line: Vec<C64>,
    lo: Vec<C64>,
    di: Vec<C64>,
    up: Vec<C64>,
    scratch: Vec<C64>,
}

impl EffectiveSolver {
    pub fn new(mesh: Mesh, schedule: DriveSchedule, consts: DerivedConsts, config: EffectiveConfig) -> Self {
        let n = mesh.len();
        let m = mesh.nx.max(mesh.ny);
        let z = C64::new(0.0, 0.0);
        EffectiveSolver {
            schedule,
            consts,
            config,
            mesh,
            b: vec![z; n],
            r: vec![z; n],
            tmp: vec![z; n],
            line: vec![z; m],
            lo: vec![z; m],
            di: vec![z; m],
            up: vec![z; m],
            scratch: vec![z; m],
        }
    }

    /// Solves (1 + iτS)v = d along every line of one axis in place; the
    /// periodic wrap coupling is left to the outer iteration.
    fn sweep(&mut self, s: &Stencil, along_x: bool, tau: f64, d: &mut [C64]) -> bool {
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let (len, lines, stride, step) = if along_x { (nx, ny, 1, nx) } else { (ny, nx, nx, 1) };
        let it = I * tau;
        for l in 0..lines {
            let base = l * step;
            for k in 0..len {
                let p = base + k * stride;
                self.lo[k] = it * s.lo[p];
                self.di[k] = 1.0 + it * s.di[p];
                self.up[k] = it * s.up[p];
                self.line[k] = d[p];
            }
            if !tridiag::solve(&self.lo[..len], &self.di[..len], &self.up[..len], &mut self.line[..len], &mut self.scratch[..len]) {
                return false;
            }
            for k in 0..len {
                d[base + k * stride] = self.line[k];
            }
        }
        true
    }

    /// One Cayley step from t to t + dt with H sampled at t + dt/2.
    pub fn step(&mut self, psi: &mut ComplexField2D, t: f64) -> Result<(), EffectiveError> {
        if !psi.mesh.same_shape(&self.mesh) {
            return Err(EffectiveError::Grid("wavefunction does not match the solver grid".into()));
        }
        let dt = self.config.dt;
        let op = build_operator(&self.schedule, &self.consts, &self.mesh, t + 0.5 * dt, self.config.diffusion, self.config.y_boundary)?;
        let tau = 0.5 * dt;
        let n = self.mesh.len();
        op.apply_rate(&psi.data, &mut self.tmp);
        for p in 0..n {
            self.b[p] = psi.data[p] - I * tau * self.tmp[p];
        }
        let bnorm = self.b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let fail = |residual| EffectiveError::NoConvergence { t, residual };
        psi.data.copy_from_slice(&self.b);
        if !self.sweep(&op.x, true, tau, &mut psi.data) {
            return Err(fail(f64::INFINITY));
        }
        let Some(ys) = &op.y else {
            return if psi.is_finite() { Ok(()) } else { Err(EffectiveError::Divergence(t + dt)) };
        };
        if !self.sweep(ys, false, tau, &mut psi.data) {
            return Err(fail(f64::INFINITY));
        }
        let mut res = f64::INFINITY;
        for _ in 0..self.config.max_iterations {
            op.apply_rate(&psi.data, &mut self.tmp);
            let mut acc = 0.0;
            for p in 0..n {
                let r = self.b[p] - psi.data[p] - I * tau * self.tmp[p];
                acc += r.norm_sqr();
                self.r[p] = r;
            }
            res = acc.sqrt() / bnorm.max(f64::MIN_POSITIVE);
            if res <= self.config.tolerance || bnorm == 0.0 {
                return if psi.is_finite() { Ok(()) } else { Err(EffectiveError::Divergence(t + dt)) };
            }
            let mut r = std::mem::take(&mut self.r);
            let ok = self.sweep(&op.x, true, tau, &mut r) && self.sweep(ys, false, tau, &mut r);
            if !ok {
                self.r = r;
                break;
            }
            for (v, d) in psi.data.iter_mut().zip(&r) {
                *v += d;
            }
            self.r = r;
        }
        Err(fail(res))
    }
}

/// Single step without keeping a solver around.
pub fn step_effective(
    psi: &ComplexField2D,
    schedule: &DriveSchedule,
    consts: &DerivedConsts,
    t: f64,
    config: EffectiveConfig,
) -> Result<ComplexField2D, EffectiveError> {
    let mut solver = EffectiveSolver::new(psi.mesh, schedule.clone(), *consts, config);
    let mut out = psi.clone();
    solver.step(&mut out, t)?;
    Ok(out)
}

/// Integrates from t0 to t_end, snapshotting every `snapshot_stride` steps
/// and at the end. Frame times are t0 + n·dt exactly.
pub fn run_effective(
    initial: &ComplexField2D,
    schedule: &DriveSchedule,
    consts: &DerivedConsts,
    t0: f64,
    t_end: f64,
    config: EffectiveConfig,
) -> Result<TimeSeries, EffectiveError> {
    let mut solver = EffectiveSolver::new(initial.mesh, schedule.clone(), *consts, config);
    let mut psi = initial.clone();
    let steps = ((t_end - t0) / config.dt - 1e-9).ceil().max(0.0) as usize;
    let stride = config.snapshot_stride.max(1);
    let mut series = TimeSeries::new();
    series.push(Frame::new(t0, psi.clone()));
    for n in 1..=steps {
        let t = t0 + (n - 1) as f64 * config.dt;
        solver.step(&mut psi, t)?;
        if n % stride == 0 || n == steps {
            series.push(Frame::new(t0 + n as f64 * config.dt, psi.clone()));
        }
    }
    Ok(series)
}
