//! Hermite polynomials, Landau strips and oscillator eigenstates.

use crate::field::{ComplexField2D, Mesh, C64};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("profile does not fit the grid: {0}")]
    Support(String),
    #[error("basis under-resolved: Gram[{m}][{n}] deviates from identity by {dev:e}")]
    Resolution { m: usize, n: usize, dev: f64 },
}

/// Physicists' Hermite polynomial H_n(z).
pub fn hermite(n: usize, z: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = 2.0 * z;
    for k in 1..n {
        let h2 = 2.0 * z * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Normalised Hermite function H_n(z) e^{−z²/2} / √(2ⁿ n! √π), computed by
/// its own three-term recurrence so large n never overflows.
pub fn hermite_function(n: usize, z: f64) -> f64 {
    let mut p0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * z * z).exp();
    if n == 0 {
        return p0;
    }
    let mut p1 = std::f64::consts::SQRT_2 * z * p0;
    for k in 1..n {
        let kf = k as f64;
        let p2 = (2.0 / (kf + 1.0)).sqrt() * z * p1 - (kf / (kf + 1.0)).sqrt() * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn support(n: usize, center: f64, length: f64, mesh: &Mesh) -> Result<(), StateError> {
    let half = (((2 * n + 1) as f64).sqrt() + 2.5) * length;
    if center - half < mesh.x_min || center + half > mesh.x_max() {
        return Err(StateError::Support(format!(
            "level {n} (length {length:e}) centred at {center:e} spans [{:e}, {:e}], grid x is [{:e}, {:e}]",
            center - half,
            center + half,
            mesh.x_min,
            mesh.x_max()
        )));
    }
    Ok(())
}

fn normalized(mut f: ComplexField2D) -> ComplexField2D {
    f.normalize();
    f
}

/// Landau-gauge strip ψ_n((x − x0)/l_B) e^{i k_s y}, unit norm on the grid.
/// The stationary centre is x0 = −k_s l_B².
pub fn landau_profile(n: usize, k_s: f64, x0: f64, l_b: f64, mesh: &Mesh) -> Result<ComplexField2D, StateError> {
    support(n, x0, l_b, mesh)?;
    let f = ComplexField2D::from_fn(*mesh, |x, y| {
        let a = hermite_function(n, (x - x0) / l_b);
        C64::from_polar(1.0, k_s * y) * a
    });
    Ok(normalized(f))
}

/// Oscillator eigenstate along x, uniform in y, unit norm on the grid.
pub fn qho_profile(n: usize, l_e: f64, mesh: &Mesh) -> Result<ComplexField2D, StateError> {
    support(n, 0.0, l_e, mesh)?;
    let f = ComplexField2D::from_fn(*mesh, |x, _| C64::new(hermite_function(n, x / l_e), 0.0));
    Ok(normalized(f))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisKind {
    Landau { k_s: f64, x0: f64, l_b: f64 },
    Qho { l_e: f64 },
}

#[derive(Clone, Debug)]
pub struct BasisSet {
    pub kind: BasisKind,
    pub max_n: usize,
    pub fields: Vec<ComplexField2D>,
}

impl BasisSet {
    pub fn gram(&self) -> Vec<Vec<C64>> {
        self.fields.iter().map(|a| self.fields.iter().map(|b| a.inner(b)).collect()).collect()
    }

    pub fn mesh(&self) -> Mesh {
        self.fields[0].mesh
    }
}

pub const GRAM_TOL: f64 = 1e-6;

pub fn make_basis(kind: BasisKind, max_n: usize, mesh: &Mesh) -> Result<BasisSet, StateError> {
    let fields = (0..=max_n)
        .map(|n| match kind {
            BasisKind::Landau { k_s, x0, l_b } => landau_profile(n, k_s, x0, l_b, mesh),
            BasisKind::Qho { l_e } => qho_profile(n, l_e, mesh),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let set = BasisSet { kind, max_n, fields };
    for (m, row) in set.gram().iter().enumerate() {
        for (n, g) in row.iter().enumerate() {
            let target = if m == n { 1.0 } else { 0.0 };
            let dev = (g - target).norm();
            if dev > GRAM_TOL {
                return Err(StateError::Resolution { m, n, dev });
            }
        }
    }
    Ok(set)
}
