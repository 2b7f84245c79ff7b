//! Physical parameters, unit conventions and derived constants.
//!
//! Everything is SI; Rabi frequencies and detunings are angular (rad/s).

use crate::field::Mesh;
use thiserror::Error;

pub const HBAR: f64 = 1.054_571_817e-34;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
    pub gamma: f64,
    /// probe carrier wavelength
    pub lambda: f64,
    pub delta_p: f64,
    /// probe detuning while the pulse is being written (Δ_p^s)
    pub delta_p_storage: f64,
    pub omega_c: f64,
    pub xi_x: f64,
    pub xi_y: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega_e: f64,
    pub omega_d: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams::landau_reference()
    }
}

impl PhysParams {
    /// Landau-level parameter set (Γ = 1 MHz, Δ_p = 0.83Γ, Ω_c = 1.5Γ, ξ = 900/800, L = 9/8 mm).
    pub fn landau_reference() -> Self {
        let gamma = 1e6;
        PhysParams {
            gamma,
            lambda: 500e-9,
            delta_p: 0.83 * gamma,
            delta_p_storage: 0.0,
            omega_c: 1.5 * gamma,
            xi_x: 900.0,
            xi_y: 800.0,
            l_x: 9e-3,
            l_y: 8e-3,
            alpha: 0.0,
            beta: 0.0,
            omega_e: 0.0,
            omega_d: 0.0,
        }
    }

    /// Driven-oscillator parameter set (Δ_p = 4.6Γ, ω_E = 20 rad·kHz, ω_d = 26 rad·kHz, α = 0.24, β = 0.15).
    pub fn qho_reference() -> Self {
        let gamma = 1e6;
        PhysParams {
            gamma,
            lambda: 500e-9,
            delta_p: 4.6 * gamma,
            delta_p_storage: 0.0,
            omega_c: 1.5 * gamma,
            xi_x: 800.0,
            xi_y: 800.0,
            l_x: 8e-3,
            l_y: 8e-3,
            alpha: 0.24,
            beta: 0.15,
            omega_e: 20e3,
            omega_d: 26e3,
        }
    }

    pub fn eta(&self) -> f64 {
        self.gamma * self.xi_x / (2.0 * self.l_x)
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda
    }

    /// Forward group velocity with the full control intensity, Ω_c²/2η.
    pub fn group_velocity(&self) -> f64 {
        self.omega_c * self.omega_c / (2.0 * self.eta())
    }

    /// Probe detuning that writes a spin wave of wavenumber `k_s`.
    pub fn storage_detuning_for(&self, k_s: f64) -> f64 {
        -self.group_velocity() * k_s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConsts {
    pub eta: f64,
    pub mass: f64,
    pub omega_b: f64,
    pub l_b: f64,
    pub l_e: Option<f64>,
    /// |0⟩ → |1⟩ driving Rabi frequency; present with a trap frequency.
    pub omega_a: Option<f64>,
    pub d_lll: f64,
    pub nu_filling: Option<f64>,
}

impl DerivedConsts {
    /// e·B_z of the Landau-stage vector potential.
    pub fn b_field(&self) -> f64 {
        self.mass * self.omega_b
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("probe detuning is zero: effective mass is undefined")]
    ZeroDetuning,
    #[error("inconsistent optical depths: Γξ_x/2L_x = {eta_x:e} but Γξ_y/2L_y = {eta_y:e}")]
    Consistency { eta_x: f64, eta_y: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

fn check_consistency(p: &PhysParams) -> Result<(), ModelError> {
    let eta_x = p.gamma * p.xi_x / (2.0 * p.l_x);
    let eta_y = p.gamma * p.xi_y / (2.0 * p.l_y);
    if ((eta_x - eta_y) / eta_x).abs() > 1e-12 {
        return Err(ModelError::Consistency { eta_x, eta_y });
    }
    Ok(())
}

pub fn derive_constants(p: &PhysParams, n_d: Option<f64>) -> Result<DerivedConsts, ModelError> {
    if !(p.gamma > 0.0 && p.xi_x > 0.0 && p.l_x > 0.0 && p.xi_y > 0.0 && p.l_y > 0.0) {
        return Err(ModelError::Invalid("Γ, ξ and L must be positive".into()));
    }
    check_consistency(p)?;
    if p.delta_p == 0.0 {
        return Err(ModelError::ZeroDetuning);
    }
    let eta = p.eta();
    let oc2 = p.omega_c * p.omega_c;
    let mass = HBAR * eta * eta / (2.0 * p.delta_p * oc2);
    let omega_b = oc2 / (p.xi_x * p.gamma);
    let l_b = (8.0 * p.delta_p.abs() / (p.xi_x * p.gamma)).sqrt() * p.l_x;
    let (l_e, omega_a) = if p.omega_e > 0.0 {
        let l_e = p.omega_c / (p.xi_x * p.gamma) * (8.0 * p.delta_p.abs() / p.omega_e).sqrt() * p.l_x;
        let oa = p.alpha * p.omega_c / 4.0 * (p.omega_e / p.delta_p.abs()).sqrt();
        (Some(l_e), Some(oa))
    } else {
        (None, None)
    };
    let d_lll = p.l_x * p.l_y / (2.0 * std::f64::consts::PI * l_b * l_b);
    let nu_filling = n_d.map(|n| 2.0 * std::f64::consts::PI * n * l_b * l_b);
    Ok(DerivedConsts { eta, mass, omega_b, l_b, l_e, omega_a, d_lll, nu_filling })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub t_end: f64,
}

impl GridSpec {
    pub fn mesh(&self) -> Mesh {
        Mesh::new(self.nx, self.ny, self.dx, self.dy, self.x_min, self.y_min)
    }

    /// Box centred on the origin with the given node counts.
    pub fn centered(nx: usize, ny: usize, dx: f64, dy: f64, dt: f64, t_end: f64) -> Self {
        let m = Mesh::centered(nx, ny, dx, dy);
        GridSpec { nx, ny, dx, dy, dt, x_min: m.x_min, y_min: m.y_min, t_end }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_params(p: &PhysParams, g: &GridSpec) -> ValidationReport {
    let mut r = ValidationReport::default();
    let mut bad = |ok: bool, msg: &str| {
        if !ok {
            r.violations.push(msg.to_string());
        }
    };
    bad(p.gamma > 0.0, "gamma must be positive");
    bad(p.omega_c >= 0.0, "omega_c must be non-negative");
    bad(p.lambda > 0.0, "lambda must be positive");
    bad(p.l_x > 0.0 && p.l_y > 0.0, "L_x and L_y must be positive");
    bad(p.xi_x > 0.0 && p.xi_y > 0.0, "xi_x and xi_y must be positive");
    bad((0.0..=1.0).contains(&p.alpha), "alpha must lie in [0, 1]");
    bad(g.nx >= 3, "nx must be at least 3");
    bad(g.ny >= 3 || g.ny == 1, "ny must be at least 3 (or 1 for x-only runs)");
    bad(g.dx > 0.0 && g.dy > 0.0, "dx and dy must be positive");
    bad(g.dt > 0.0, "dt must be positive");
    bad(g.t_end >= 0.0, "t_end must be non-negative");
    if p.gamma > 0.0 && p.l_x > 0.0 && p.l_y > 0.0 {
        if let Err(e) = check_consistency(p) {
            r.violations.push(format!("consistency: {e}"));
        }
    }
    if g.nx >= 1 && g.dx > 0.0 && p.l_x > 0.0 {
        let x_max = g.x_min + (g.nx - 1) as f64 * g.dx;
        if g.x_min <= -p.l_x || x_max >= p.l_x {
            r.violations.push("domain must lie strictly inside (-L_x, L_x)".into());
        }
    }

    if (2.0 * p.delta_p).abs() < 5.0 * p.gamma {
        r.warnings.push(format!(
            "|2Δ_p| = {:.2}Γ is not ≫ Γ: the adiabatic effective picture is only qualitative",
            (2.0 * p.delta_p / p.gamma).abs()
        ));
    }
    if p.gamma > 0.0 && p.l_x > 0.0 && g.dt > 0.0 && g.dy > 0.0 {
        let v = p.group_velocity();
        if v * g.dt >= g.dy {
            r.warnings.push(format!("dt·V_g = {:.3e} m exceeds dy; slow-light advection is under-resolved", v * g.dt));
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn landau_reference_constants() {
        let c = derive_constants(&PhysParams::landau_reference(), None).unwrap();
        assert!(rel(c.mass, 7e-32) < 0.01);
        assert!(rel(c.omega_b, 2.5e3) < 1e-12);
        assert!(rel(c.l_b, 0.77e-3) < 0.01);
        assert!(c.l_e.is_none() && c.nu_filling.is_none());
    }

    #[test]
    fn qho_reference_constants() {
        let c = derive_constants(&PhysParams::qho_reference(), None).unwrap();
        assert!(rel(c.mass, 1.27e-32) < 0.01);
        assert!(rel(c.l_e.unwrap(), 0.644e-3) < 0.01);
        // 5.93 rad·kHz; the quoted "6" is rounded
        assert!(rel(c.omega_a.unwrap(), 5934.4) < 1e-4);
    }

    #[test]
    fn eta_by_substitution() {
        let p = PhysParams { gamma: 1.0, xi_x: 2.0, l_x: 1.0, xi_y: 2.0, l_y: 1.0, ..PhysParams::default() };
        assert_eq!(p.eta(), 1.0);
    }

    #[test]
    fn magnetic_length_forms_agree() {
        let p = PhysParams::landau_reference();
        let c = derive_constants(&p, Some(1e6)).unwrap();
        let alt = 2.0 * (p.delta_p * p.l_x / c.eta).sqrt();
        assert!(rel(c.l_b, alt) < 1e-12);
        assert!(rel(c.l_b * c.l_b * c.mass * c.omega_b, HBAR) < 1e-10);
        assert!(rel(c.nu_filling.unwrap(), 2.0 * std::f64::consts::PI * 1e6 * c.l_b * c.l_b) < 1e-14);
    }

    #[test]
    fn trap_length_matches_hbar() {
        let p = PhysParams::qho_reference();
        let c = derive_constants(&p, None).unwrap();
        let le = c.l_e.unwrap();
        assert!(rel(le * le * c.mass * p.omega_e, HBAR) < 1e-10);
    }

    #[test]
    fn storage_detuning_for_one_winding() {
        let p = PhysParams::landau_reference();
        let ks = 2.0 * std::f64::consts::PI / p.l_y;
        let d = p.storage_detuning_for(ks) / p.gamma;
        assert!((d + 0.018).abs() < 0.001, "{d}");
    }

    #[test]
    fn errors() {
        let p = PhysParams { delta_p: 0.0, ..PhysParams::default() };
        assert_eq!(derive_constants(&p, None), Err(ModelError::ZeroDetuning));
        let p = PhysParams { xi_y: 801.0, ..PhysParams::default() };
        assert!(matches!(derive_constants(&p, None), Err(ModelError::Consistency { .. })));
    }

    #[test]
    fn validation_reports() {
        let p = PhysParams::landau_reference();
        let g = GridSpec::centered(91, 81, 1e-4, 1e-4, 300e-9, 3.3e-3);
        let r = validate_params(&p, &g);
        assert!(r.is_ok(), "{:?}", r.violations);
        let r = validate_params(&p, &GridSpec { dt: 0.0, ..g });
        assert!(r.violations.iter().any(|v| v == "dt must be positive"));
        let r = validate_params(&PhysParams { xi_y: 700.0, ..p }, &g);
        assert!(r.violations.iter().any(|v| v.starts_with("consistency")));
    }
}
