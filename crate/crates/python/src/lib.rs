//! Python bindings: the CLI entry point plus config, snapshot and overlap
//! helpers. Fields cross the boundary as flat row-major lists of complex.

use std::path::PathBuf;

use eitsim::diagnostics;
use eitsim::io::{self, ScenarioKind};
use eitsim::states::{landau_profile, qho_profile};
use eitsim::{ComplexField2D, Mesh};
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: io::IoError) -> PyErr {
    match e {
        io::IoError::Config(c) => PyValueError::new_err(c.to_string()),
        other => PyIOError::new_err(other.to_string()),
    }
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn main(args: Vec<String>) -> i32 {
    eitsim::cli::main_with(std::iter::once("eitsim".to_string()).chain(args))
}

/// Commented config text for "landau", "landau_offset", "qho" or "null_uniform".
#[pyfunction]
fn template(kind: &str) -> PyResult<String> {
    let kind = match kind {
        "landau" => ScenarioKind::Landau,
        "landau_offset" => ScenarioKind::LandauOffset,
        "qho" => ScenarioKind::Qho,
        "null_uniform" => ScenarioKind::NullUniform,
        _ => return Err(value_err(format!("unknown scenario kind {kind:?}"))),
    };
    Ok(io::template(kind))
}

/// Derived constants of a config file as a dict (SI units).
#[pyfunction]
fn constants<'py>(py: Python<'py>, config: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let cfg = io::read_config(&config).map_err(io_err)?;
    let c = cfg.consts().map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("eta", c.eta)?;
    d.set_item("mass", c.mass)?;
    d.set_item("omega_b", c.omega_b)?;
    d.set_item("l_b", c.l_b)?;
    d.set_item("l_e", c.l_e)?;
    d.set_item("omega_a", c.omega_a)?;
    d.set_item("d_lll", c.d_lll)?;
    Ok(d)
}

/// A stored frame: time, grid and named fields.
#[pyclass(frozen)]
struct Snapshot {
    #[pyo3(get)]
    t: f64,
    #[pyo3(get)]
    nx: usize,
    #[pyo3(get)]
    ny: usize,
    #[pyo3(get)]
    dx: f64,
    #[pyo3(get)]
    dy: f64,
    #[pyo3(get)]
    x_min: f64,
    #[pyo3(get)]
    y_min: f64,
    fields: Vec<(String, Vec<Complex64>)>,
}

#[pymethods]
impl Snapshot {
    fn names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.0.clone()).collect()
    }

    /// Row-major values (index j·nx + i) of the named field.
    fn field(&self, name: &str) -> PyResult<Vec<Complex64>> {
        self.fields.iter().find(|f| f.0 == name).map(|f| f.1.clone()).ok_or_else(|| value_err(format!("no field {name:?}")))
    }

    fn __repr__(&self) -> String {
        format!("Snapshot(t={:e}, {}x{}, fields={:?})", self.t, self.nx, self.ny, self.names())
    }
}

impl From<io::Snapshot> for Snapshot {
    fn from(s: io::Snapshot) -> Self {
        let m = s.mesh;
        Snapshot {
            t: s.t,
            nx: m.nx,
            ny: m.ny,
            dx: m.dx,
            dy: m.dy,
            x_min: m.x_min,
            y_min: m.y_min,
            fields: s.fields.into_iter().map(|(n, f)| (n, f.data)).collect(),
        }
    }
}

#[pyfunction]
fn load_snapshot(path: PathBuf) -> PyResult<Snapshot> {
    io::load_snapshot(&path).map(Snapshot::from).map_err(io_err)
}

/// Every frame of a series directory written by `run`.
#[pyfunction]
fn read_series(dir: PathBuf) -> PyResult<Vec<Snapshot>> {
    let s = io::read_series(&dir).map_err(io_err)?;
    Ok(s.frames
        .into_iter()
        .map(|f| Snapshot::from(io::Snapshot::from_field(f.t, "rho21", &f.rho21)))
        .collect())
}

/// Columns of a CSV written by `run` or `analyze`, keyed by header.
#[pyfunction]
fn read_csv<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let (h, rows) = io::read_csv(&path).map_err(io_err)?;
    let d = PyDict::new(py);
    for name in &h {
        d.set_item(name, io::column(&h, &rows, name))?;
    }
    Ok(d)
}

fn field(values: Vec<Complex64>, nx: usize, ny: usize) -> PyResult<ComplexField2D> {
    if values.len() != nx * ny || values.is_empty() {
        return Err(value_err(format!("expected {} values, got {}", nx * ny, values.len())));
    }
    Ok(ComplexField2D::from_vec(Mesh::new(nx, ny, 1.0, 1.0, 0.0, 0.0), values))
}

/// |⟨a|b⟩|² / (‖a‖²‖b‖²) of two equally shaped fields.
#[pyfunction]
fn overlap(a: Vec<Complex64>, b: Vec<Complex64>) -> PyResult<f64> {
    let n = a.len();
    diagnostics::overlap(&field(a, n, 1)?, &field(b, n, 1)?).map_err(value_err)
}

/// Landau strip ψ_n(x, y) e^{i k_s y} on an nx × ny grid, row-major.
#[pyfunction]
#[pyo3(signature = (n, k_s, x0, l_b, nx, ny, dx, dy, x_min, y_min))]
#[allow(clippy::too_many_arguments)]
fn landau_state(n: usize, k_s: f64, x0: f64, l_b: f64, nx: usize, ny: usize, dx: f64, dy: f64, x_min: f64, y_min: f64) -> PyResult<Vec<Complex64>> {
    let mesh = Mesh::new(nx, ny, dx, dy, x_min, y_min);
    landau_profile(n, k_s, x0, l_b, &mesh).map(|f| f.data).map_err(value_err)
}

/// Harmonic-oscillator eigenfunction on a line of nx points.
#[pyfunction]
fn qho_state(n: usize, l_e: f64, nx: usize, dx: f64, x_min: f64) -> PyResult<Vec<Complex64>> {
    qho_profile(n, l_e, &Mesh::line(nx, dx, x_min)).map(|f| f.data).map_err(value_err)
}

#[pymodule]
fn eitsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Snapshot>()?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    m.add_function(wrap_pyfunction!(template, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(load_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(read_series, m)?)?;
    m.add_function(wrap_pyfunction!(read_csv, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(landau_state, m)?)?;
    m.add_function(wrap_pyfunction!(qho_state, m)?)?;
    Ok(())
}
