//! Control-beam, detuning and probe-injection schedules for the storage →
//! retrieval → gauge sequences.
//!
//! Every quantity is evaluated analytically at arbitrary (x, y, t) so RK4
//! substages see exact mid-step values. Controls are uniform in y.

use crate::field::Mesh;
use crate::model::{DerivedConsts, PhysParams, HBAR};
use crate::states::hermite_function;
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Beam {
    Forward,
    Backward,
    Rightward,
    Leftward,
}

impl Beam {
    pub const ALL: [Beam; 4] = [Beam::Forward, Beam::Backward, Beam::Rightward, Beam::Leftward];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Beam::Forward => "F",
            Beam::Backward => "B",
            Beam::Rightward => "R",
            Beam::Leftward => "L",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RampDirection {
    Up,
    Down,
}

/// ½[1 ± tanh((t − t*)/(τ/4))]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampSpec {
    pub center: f64,
    pub width: f64,
    pub direction: RampDirection,
}

impl RampSpec {
    pub fn up(center: f64, width: f64) -> Self {
        RampSpec { center, width, direction: RampDirection::Up }
    }

    pub fn down(center: f64, width: f64) -> Self {
        RampSpec { center, width, direction: RampDirection::Down }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let th = ((t - self.center) / (0.25 * self.width)).tanh();
        match self.direction {
            RampDirection::Up => 0.5 * (1.0 + th),
            RampDirection::Down => 0.5 * (1.0 - th),
        }
    }

    /// Largest slope of the ramp, reached at its centre.
    pub fn max_slope(&self) -> f64 {
        2.0 / self.width
    }
}

#[inline]
fn up(t: f64, center: f64, width: f64) -> f64 {
    0.5 * (1.0 + ((t - center) / (0.25 * width)).tanh())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandauTiming {
    pub t_s: f64,
    pub t_r: f64,
    pub t_lg: f64,
    pub tau_s: f64,
    pub tau: f64,
}

impl Default for LandauTiming {
    fn default() -> Self {
        LandauTiming { t_s: 0.4e-3, t_r: 0.42e-3, t_lg: 0.4225e-3, tau_s: 4e-6, tau: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QhoTiming {
    pub t_s: f64,
    pub t_r: f64,
    pub t_h: f64,
    pub t_d: f64,
    pub tau_s: f64,
    pub tau: f64,
    pub tau_d: f64,
}

impl Default for QhoTiming {
    fn default() -> Self {
        QhoTiming { t_s: 0.22e-3, t_r: 0.241e-3, t_h: 0.2425e-3, t_d: 0.2625e-3, tau_s: 4e-6, tau: 1e-6, tau_d: 25e-6 }
    }
}

/// Probe envelope Ω₀(t): a flat-top pulse with tanh edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbePulse {
    pub peak: f64,
    pub t_on: f64,
    pub t_off: f64,
    pub edge: f64,
}

impl ProbePulse {
    pub const OFF: ProbePulse = ProbePulse { peak: 0.0, t_on: 0.0, t_off: 0.0, edge: 1.0 };

    /// Fills the medium during the write stage and is gone before storage.
    pub fn before_storage(gamma: f64, t_s: f64) -> Self {
        ProbePulse { peak: 0.01 * gamma, t_on: 20e-6, t_off: t_s - 20e-6, edge: 20e-6 }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.peak == 0.0 {
            return 0.0;
        }
        self.peak * up(t, self.t_on, self.edge) * (1.0 - up(t, self.t_off, self.edge))
    }
}

/// Transverse shape of the injected forward probe, H_n(z) e^{−z²/2} with
/// z = (x − center)/length (unit-height normalisation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Injection {
    pub n: usize,
    pub center: f64,
    pub length: f64,
}

impl Injection {
    pub fn eval(&self, x: f64) -> f64 {
        hermite_function(self.n, (x - self.center) / self.length) * std::f64::consts::PI.powf(0.25)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Recipe {
    /// storage, four-beam retrieval, transverse-gradient gauge stage
    Landau(LandauTiming),
    /// storage, R/L retrieval, anharmonic trap, α sin(ω_d t) modulation
    Qho { timing: QhoTiming, gauge_consistent: bool },
    /// storage then four equal beams with Δ_c = Δ_p (A = 0, U = 0)
    Uniform(LandauTiming),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriveError {
    #[error("timing out of order: {0}")]
    Timing(String),
    #[error("profile does not fit the grid: {0}")]
    Support(String),
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveSchedule {
    pub params: PhysParams,
    pub consts: DerivedConsts,
    pub recipe: Recipe,
    pub probe: ProbePulse,
    pub injection: Injection,
}

/// Drive values along x for one instant; controls are y-uniform so one row
/// describes the whole grid.
#[derive(Clone, Debug, Default)]
pub struct ColumnDrives {
    pub t: f64,
    pub control: [Vec<f64>; 4],
    pub delta_c: Vec<f64>,
    pub delta_p: f64,
    pub probe_envelope: f64,
}

impl DriveSchedule {
    pub fn control(&self, beam: Beam, x: f64, _y: f64, t: f64) -> f64 {
        self.controls(x, t)[beam.index()]
    }

    /// (F, B, R, L) amplitudes at (x, t).
    pub fn controls(&self, x: f64, t: f64) -> [f64; 4] {
        let oc = self.params.omega_c;
        let half = oc / SQRT_2;
        match self.recipe {
            Recipe::Landau(tm) => {
                let r = up(t, tm.t_r, tm.tau);
                let g = up(t, tm.t_lg, tm.tau);
                let xl = x / self.params.l_x;
                let f = oc * (1.0 - up(t, tm.t_s, tm.tau_s))
                    + half * r * (1.0 + (-1.0 + (1.0 + xl).max(0.0).sqrt()) * g);
                let b = half * r * (1.0 + (-1.0 + (1.0 - xl).max(0.0).sqrt()) * g);
                [f, b, half * r, half * r]
            }
            Recipe::Uniform(tm) => {
                let r = up(t, tm.t_r, tm.tau);
                let f = oc * (1.0 - up(t, tm.t_s, tm.tau_s)) + half * r;
                [f, half * r, half * r, half * r]
            }
            Recipe::Qho { timing: tm, .. } => {
                let r = up(t, tm.t_r, tm.tau);
                let d = up(t, tm.t_d, tm.tau_d);
                let s = self.params.alpha * (self.params.omega_d * t).sin();
                let f = oc * (1.0 - up(t, tm.t_s, tm.tau_s));
                let rr = half * r * (1.0 + (-1.0 + (1.0 + s).max(0.0).sqrt()) * d);
                let ll = half * r * (1.0 + (-1.0 + (1.0 - s).max(0.0).sqrt()) * d);
                [f, 0.0, rr, ll]
            }
        }
    }

    fn retrieval(&self) -> (f64, f64) {
        match self.recipe {
            Recipe::Landau(tm) | Recipe::Uniform(tm) => (tm.t_r, tm.tau),
            Recipe::Qho { timing, .. } => (timing.t_r, timing.tau),
        }
    }

    /// Last instant at which only the forward beam can be on.
    pub fn retrieval_start(&self) -> f64 {
        let (t_r, tau) = self.retrieval();
        t_r - 2.0 * tau
    }

    pub fn delta_p(&self, t: f64) -> f64 {
        let (t_r, tau) = self.retrieval();
        let p = &self.params;
        p.delta_p_storage + (p.delta_p - p.delta_p_storage) * up(t, t_r, tau)
    }

    /// Trap part of the scalar potential (rad/s), before ramping.
    pub fn trap(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.recipe {
            Recipe::Landau(_) => p.omega_c * p.omega_c * x * x / (16.0 * p.delta_p * p.l_x * p.l_x),
            Recipe::Uniform(_) => 0.0,
            Recipe::Qho { .. } => {
                let z = x / self.consts.l_e.unwrap_or(f64::INFINITY);
                let z2 = z * z;
                p.omega_e * (0.5 * z2 + 2.0 * p.beta / 3.0 * z2 * z2)
            }
        }
    }

    pub fn delta_c(&self, x: f64, t: f64) -> f64 {
        let p = &self.params;
        let (t_r, tau) = self.retrieval();
        let base = p.delta_p * up(t, t_r, tau);
        match self.recipe {
            Recipe::Landau(tm) => base - self.trap(x) * up(t, tm.t_lg, tm.tau),
            Recipe::Uniform(_) => base,
            Recipe::Qho { timing, gauge_consistent } => {
                let mut dc = base - self.trap(x) * up(t, timing.t_h, timing.tau);
                if gauge_consistent {
                    let c = self.controls(x, t);
                    let vx = (c[2] * c[2] - c[3] * c[3]) / (2.0 * self.consts.eta);
                    dc -= self.consts.mass * vx * vx / (2.0 * HBAR);
                }
                dc
            }
        }
    }

    pub fn probe_envelope(&self, t: f64) -> f64 {
        self.probe.eval(t)
    }

    pub fn injection(&self, x: f64) -> f64 {
        self.injection.eval(x)
    }

    /// Instant after which the synthetic potentials are fully on.
    pub fn gauge_onset(&self) -> f64 {
        match self.recipe {
            Recipe::Landau(tm) => tm.t_lg,
            Recipe::Uniform(tm) => tm.t_r,
            Recipe::Qho { timing, .. } => timing.t_h,
        }
    }

    /// Start of the α modulation (QHO only).
    pub fn drive_onset(&self) -> Option<f64> {
        match self.recipe {
            Recipe::Qho { timing, .. } => Some(timing.t_d),
            _ => None,
        }
    }

    pub fn storage_time(&self) -> f64 {
        match self.recipe {
            Recipe::Landau(tm) | Recipe::Uniform(tm) => tm.t_s,
            Recipe::Qho { timing, .. } => timing.t_s,
        }
    }

    pub fn columns(&self, mesh: &Mesh, t: f64) -> ColumnDrives {
        let mut out = ColumnDrives::default();
        self.fill_columns(mesh, t, &mut out);
        out
    }

    pub fn fill_columns(&self, mesh: &Mesh, t: f64, out: &mut ColumnDrives) {
        let nx = mesh.nx;
        for c in out.control.iter_mut() {
            c.resize(nx, 0.0);
        }
        out.delta_c.resize(nx, 0.0);
        for i in 0..nx {
            let x = mesh.x(i);
            let c = self.controls(x, t);
            for (b, v) in c.iter().enumerate() {
                out.control[b][i] = *v;
            }
            out.delta_c[i] = self.delta_c(x, t);
        }
        out.t = t;
        out.delta_p = self.delta_p(t);
        out.probe_envelope = self.probe_envelope(t);
    }

    pub fn with_probe(mut self, probe: ProbePulse) -> Self {
        self.probe = probe;
        self
    }
}

fn check_order(names: &[(&str, f64)]) -> Result<(), DriveError> {
    for w in names.windows(2) {
        if w[0].1 >= w[1].1 {
            return Err(DriveError::Timing(format!("{} = {:e} must precede {} = {:e}", w[0].0, w[0].1, w[1].0, w[1].1)));
        }
    }
    Ok(())
}

fn check_widths(widths: &[(&str, f64)]) -> Result<(), DriveError> {
    for (n, w) in widths {
        if *w <= 0.0 {
            return Err(DriveError::Timing(format!("{n} must be positive")));
        }
    }
    Ok(())
}

fn check_inside_lx(params: &PhysParams, mesh: &Mesh) -> Result<(), DriveError> {
    if mesh.x_min <= -params.l_x || mesh.x_max() >= params.l_x {
        return Err(DriveError::Support(format!(
            "x range [{:e}, {:e}] must lie inside (-L_x, L_x) for the gradient beams",
            mesh.x_min,
            mesh.x_max()
        )));
    }
    Ok(())
}

/// Fails if an n-th level profile of the given length around `center` is not
/// at least three widths inside the x range.
pub fn check_support(n: usize, center: f64, length: f64, mesh: &Mesh) -> Result<(), DriveError> {
    let half = ((2 * n + 1) as f64).sqrt() * length + 3.0 * length;
    if center - half < mesh.x_min || center + half > mesh.x_max() {
        return Err(DriveError::Support(format!(
            "level {n} of width {length:e} centred at {center:e} needs x in [{:e}, {:e}]",
            center - half,
            center + half
        )));
    }
    Ok(())
}

/// Landau recipe. `x0` is the injected profile centre; `k_s` is written
/// into the spin wave through the storage detuning −V_F k_s.
pub fn landau_schedule(
    params: &PhysParams,
    consts: &DerivedConsts,
    n: usize,
    k_s: f64,
    x0: f64,
    timing: LandauTiming,
    mesh: &Mesh,
) -> Result<DriveSchedule, DriveError> {
    check_order(&[("t_s", timing.t_s), ("t_r", timing.t_r), ("t_LG", timing.t_lg)])?;
    check_widths(&[("tau_s", timing.tau_s), ("tau", timing.tau)])?;
    check_inside_lx(params, mesh)?;
    check_support(n, x0, consts.l_b, mesh)?;
    check_support(n, -k_s * consts.l_b * consts.l_b, consts.l_b, mesh)?;
    let mut p = *params;
    p.delta_p_storage = params.storage_detuning_for(k_s);
    Ok(DriveSchedule {
        params: p,
        consts: *consts,
        recipe: Recipe::Landau(timing),
        probe: ProbePulse::before_storage(p.gamma, timing.t_s),
        injection: Injection { n, center: x0, length: consts.l_b },
    })
}

pub fn qho_schedule(
    params: &PhysParams,
    consts: &DerivedConsts,
    n: usize,
    timing: QhoTiming,
    mesh: &Mesh,
) -> Result<DriveSchedule, DriveError> {
    check_order(&[("t_s", timing.t_s), ("t_r", timing.t_r), ("t_H", timing.t_h), ("t_D", timing.t_d)])?;
    check_widths(&[("tau_s", timing.tau_s), ("tau", timing.tau), ("tau_D", timing.tau_d)])?;
    let l_e = consts
        .l_e
        .ok_or_else(|| DriveError::Timing("trap frequency omega_E must be positive for the QHO recipe".into()))?;
    check_support(n, 0.0, l_e, mesh)?;
    let mut p = *params;
    p.delta_p_storage = 0.0;
    Ok(DriveSchedule {
        params: p,
        consts: *consts,
        recipe: Recipe::Qho { timing, gauge_consistent: false },
        probe: ProbePulse::before_storage(p.gamma, timing.t_s),
        injection: Injection { n, center: 0.0, length: l_e },
    })
}

/// Null recipe: after retrieval all four beams carry Ω_c/√2 and Δ_c = Δ_p.
pub fn uniform_schedule(
    params: &PhysParams,
    consts: &DerivedConsts,
    n: usize,
    x0: f64,
    timing: LandauTiming,
    mesh: &Mesh,
) -> Result<DriveSchedule, DriveError> {
    check_order(&[("t_s", timing.t_s), ("t_r", timing.t_r)])?;
    check_widths(&[("tau_s", timing.tau_s), ("tau", timing.tau)])?;
    check_support(n, x0, consts.l_b, mesh)?;
    Ok(DriveSchedule {
        params: *params,
        consts: *consts,
        recipe: Recipe::Uniform(timing),
        probe: ProbePulse::before_storage(params.gamma, timing.t_s),
        injection: Injection { n, center: x0, length: consts.l_b },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potentials {
    /// vector potential per unit charge (kg·m/s)
    pub a: [f64; 2],
    /// scalar potential energy (J)
    pub u: f64,
    /// group velocity (m/s)
    pub vg: [f64; 2],
}

pub fn synthetic_potentials(s: &DriveSchedule, consts: &DerivedConsts, x: f64, _y: f64, t: f64) -> Potentials {
    let c = s.controls(x, t);
    let two_eta = 2.0 * consts.eta;
    let vg = [(c[2] * c[2] - c[3] * c[3]) / two_eta, (c[0] * c[0] - c[1] * c[1]) / two_eta];
    let a = [consts.mass * vg[0], consts.mass * vg[1]];
    let a2 = a[0] * a[0] + a[1] * a[1];
    let u = HBAR * (s.delta_p(t) - s.delta_c(x, t)) - a2 / (2.0 * consts.mass);
    Potentials { a, u, vg }
}
