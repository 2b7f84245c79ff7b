//! Complex scalar fields on the rectangular simulation mesh.

pub use num_complex::Complex64 as C64;

/// Spatial grid. Node (i, j) sits at (x_min + i dx, y_min + j dy) and is
/// stored at `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x_min: f64,
    pub y_min: f64,
}

impl Mesh {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, x_min: f64, y_min: f64) -> Self {
        Mesh { nx, ny, dx, dy, x_min, y_min }
    }

    /// Grid centred on the origin.
    pub fn centered(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        let x_min = -0.5 * (nx - 1) as f64 * dx;
        let y_min = if ny > 1 { -0.5 * (ny - 1) as f64 * dy } else { 0.0 };
        Mesh { nx, ny, dx, dy, x_min, y_min }
    }

    /// x-only mesh used for reduced QHO runs.
    pub fn line(nx: usize, dx: f64, x_min: f64) -> Self {
        Mesh { nx, ny: 1, dx, dy: 1.0, x_min, y_min: 0.0 }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.ny - 1)
    }

    /// Quadrature weight of one node; a line mesh integrates over x only.
    #[inline]
    pub fn weight(&self) -> f64 {
        if self.ny == 1 {
            self.dx
        } else {
            self.dx * self.dy
        }
    }

    pub fn is_1d(&self) -> bool {
        self.ny == 1
    }

    pub fn same_shape(&self, other: &Mesh) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField2D {
    pub mesh: Mesh,
    pub data: Vec<C64>,
}

impl ComplexField2D {
    pub fn zeros(mesh: Mesh) -> Self {
        ComplexField2D { mesh, data: vec![C64::new(0.0, 0.0); mesh.len()] }
    }

    pub fn from_fn(mesh: Mesh, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let mut data = Vec::with_capacity(mesh.len());
        for j in 0..mesh.ny {
            let y = mesh.y(j);
            for i in 0..mesh.nx {
                data.push(f(mesh.x(i), y));
            }
        }
        ComplexField2D { mesh, data }
    }

    pub fn from_vec(mesh: Mesh, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), mesh.len(), "field length does not match mesh");
        ComplexField2D { mesh, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.mesh.nx + i]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.data[j * self.mesh.nx + i]
    }

    pub fn row(&self, j: usize) -> &[C64] {
        let nx = self.mesh.nx;
        &self.data[j * nx..(j + 1) * nx]
    }

    /// ⟨self|other⟩ as a Riemann sum.
    pub fn inner(&self, other: &ComplexField2D) -> C64 {
        debug_assert!(self.mesh.same_shape(&other.mesh));
        let s: C64 = self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum();
        s * self.mesh.weight()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.mesh.weight()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, s: C64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// Divides by the norm; returns false (and leaves the field) when it is zero.
    pub fn normalize(&mut self) -> bool {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return false;
        }
        self.scale(C64::new(1.0 / n, 0.0));
        true
    }

    /// self += a * other
    pub fn axpy(&mut self, a: C64, other: &ComplexField2D) {
        for (z, w) in self.data.iter_mut().zip(&other.data) {
            *z += a * w;
        }
    }

    pub fn sub(&self, other: &ComplexField2D) -> ComplexField2D {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        ComplexField2D { mesh: self.mesh, data }
    }

    /// Integrates out y, leaving a line field on the x axis.
    pub fn marginal_x(&self) -> ComplexField2D {
        let m = self.mesh;
        if m.is_1d() {
            return self.clone();
        }
        let mut out = ComplexField2D::zeros(Mesh::line(m.nx, m.dx, m.x_min));
        for j in 0..m.ny {
            for (o, v) in out.data.iter_mut().zip(self.row(j)) {
                *o += v * m.dy;
            }
        }
        out
    }

    /// Index of the y row nearest to `y`.
    pub fn nearest_row(&self, y: f64) -> usize {
        let m = self.mesh;
        if m.ny == 1 {
            return 0;
        }
        (((y - m.y_min) / m.dy).round().max(0.0) as usize).min(m.ny - 1)
    }
}
