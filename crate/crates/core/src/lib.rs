//! Optical-Bloch simulator for synthetic gauge potentials acting on
//! dark-state polaritons in a four-beam EIT medium.
//!
//! The full atomic + probe system is integrated in [`obe`]; [`effective`]
//! is an independent Schrödinger-level reference. Everything is SI with
//! angular frequencies in rad/s.

pub mod cli;
pub mod diagnostics;
pub mod drives;
pub mod effective;
pub mod field;
pub mod io;
pub mod model;
pub mod obe;
pub mod series;
pub mod states;
pub mod tridiag;

pub use field::{ComplexField2D, Mesh, C64};
pub use model::{derive_constants, validate_params, DerivedConsts, GridSpec, PhysParams, HBAR};

/// Worker pool sized from `EITSIM_THREADS` (falls back to the hardware count).
pub fn init_threads() {
    if let Some(n) = std::env::var("EITSIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second call (tests) just keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
