//! The three model spaces: flat torus, z-periodized Heisenberg group and SU(2).
//!
//! Each [`ModelSpace`] owns a tensor quadrature grid in chart coordinates, the
//! density of its reference measure on that grid, and the coefficient arrays of
//! its left-invariant vector fields.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, GridFunction, TensorGrid};

const TWO_PI: f64 = 2.0 * PI;

/// Representative of `x` modulo `2π` in `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x - TWO_PI * (x / TWO_PI).floor();
    if r >= TWO_PI { 0.0 } else { r }
}
const CHART_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// `T^d` with period 2π per axis; modes `|k|_∞ ≤ k_max`.
    Torus { dim: usize, k_max: i64 },
    /// First Heisenberg group with `z` periodized to `[0, 2π)`; modes
    /// `0 < |λ| ≤ lambda_max`, `k ≤ k_max`; quadrature box of radius `radius`.
    Heisenberg { radius: f64, lambda_max: i64, k_max: u32 },
    /// SU(2) in cylindric coordinates; modes `|n| ≤ n_max`, `k ≤ k_max`.
    Su2 { n_max: i64, k_max: u32 },
}

impl Geometry {
    pub fn torus(dim: usize) -> Self {
        Geometry::Torus { dim, k_max: 16 }
    }

    pub fn heisenberg() -> Self {
        Geometry::Heisenberg { radius: 12.0, lambda_max: 6, k_max: 8 }
    }

    pub fn su2() -> Self {
        Geometry::Su2 { n_max: 6, k_max: 8 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Torus { .. } => "torus",
            Geometry::Heisenberg { .. } => "heisenberg",
            Geometry::Su2 { .. } => "su2",
        }
    }

    /// Number of horizontal fields `d` (the size of `∇`).
    pub fn horizontal_dim(&self) -> usize {
        match self {
            Geometry::Torus { dim, .. } => *dim,
            Geometry::Heisenberg { .. } | Geometry::Su2 { .. } => 2,
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, Geometry::Heisenberg { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Torus { dim, k_max } => {
                if dim == 0 || k_max < 1 {
                    return Err(Error::Contract(format!("torus needs dim >= 1 and K >= 1, got dim={dim} K={k_max}")));
                }
            }
            Geometry::Heisenberg { radius, lambda_max, .. } => {
                if !(radius > 0.0 && radius.is_finite()) || lambda_max < 1 {
                    return Err(Error::Contract(format!(
                        "heisenberg needs R > 0 and Lambda >= 1, got R={radius} Lambda={lambda_max}"
                    )));
                }
            }
            Geometry::Su2 { n_max, .. } => {
                if n_max < 1 {
                    return Err(Error::Contract(format!("su2 needs N >= 1, got {n_max}")));
                }
            }
        }
        Ok(())
    }
}

/// Grid resolution. `n` is the per-axis count on the torus; the other fields
/// describe the `(r, θ, z)` grid of the three-dimensional models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub nr: usize,
    pub ntheta: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn default_for(geometry: &Geometry) -> Self {
        match geometry {
            Geometry::Torus { dim, .. } => Self { n: if *dim <= 2 { 64 } else { 32 }, nr: 0, ntheta: 0, nz: 0 },
            Geometry::Heisenberg { .. } => Self { n: 0, nr: 160, ntheta: 8, nz: 16 },
            Geometry::Su2 { .. } => Self { n: 0, nr: 48, ntheta: 8, nz: 24 },
        }
    }
}

/// Finite-difference settings for pointwise field evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSpec {
    pub step: f64,
    pub richardson: bool,
}

impl Default for FdSpec {
    fn default() -> Self {
        Self { step: 1e-4, richardson: false }
    }
}

/// A point in chart coordinates: torus angles, Heisenberg `(x, y, z)` or
/// SU(2) cylindric `(r, θ, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        Point(coords.to_vec())
    }
}

/// A left-invariant vector field: one of the horizontal fields or the
/// vertical field `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    Horizontal(usize),
    Vertical,
}

/// 2×2 complex matrix.
pub type Mat2 = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The generator matrices of the Lie algebra of SU(2) for `X`, `Y`, `Z`.
pub fn su2_generator(field: Field) -> Result<Mat2> {
    Ok(match field {
        Field::Horizontal(0) => [[c(0.0, 0.0), c(1.0, 0.0)], [c(-1.0, 0.0), c(0.0, 0.0)]],
        Field::Horizontal(1) => [[c(0.0, 0.0), c(0.0, 1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
        Field::Vertical => [[c(0.0, 1.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, -1.0)]],
        Field::Horizontal(_) => return Err(Error::Domain("SU(2) has two horizontal fields".into())),
    })
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// An element of SU(2) stored by its first row `(a, b)`; the matrix is
/// `[[a, b], [-b̄, ā]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2 {
    pub a: Complex64,
    pub b: Complex64,
}

impl Su2 {
    pub fn identity() -> Self {
        Su2 { a: c(1.0, 0.0), b: c(0.0, 0.0) }
    }

    pub fn matrix(&self) -> Mat2 {
        [[self.a, self.b], [-self.b.conj(), self.a.conj()]]
    }

    /// Chart map `(r, θ, z) ↦ exp(r cos θ X + r sin θ Y) exp(z Z)`.
    pub fn from_chart(r: f64, theta: f64, z: f64) -> Self {
        let first = Su2::exp_algebra(r * theta.cos(), r * theta.sin(), 0.0);
        first.mul(&Su2::exp_algebra(0.0, 0.0, z))
    }

    /// Inverse chart with `θ ∈ [0, 2π)` and `z ∈ (-π, π]`.
    pub fn to_chart(&self) -> [f64; 3] {
        let r = self.b.norm().atan2(self.a.norm());
        let z = if self.a.norm() > 0.0 { self.a.arg() } else { 0.0 };
        let phase = if self.b.norm() > 0.0 { self.b.arg() } else { 0.0 };
        let theta = wrap_angle(phase + z);
        [r, theta, z]
    }

    /// `exp(αX + βY + γZ)`. The generators square to `-I` and anticommute, so
    /// the exponential is `cos ρ I + (sin ρ / ρ) M` with `ρ² = α² + β² + γ²`.
    pub fn exp_algebra(alpha: f64, beta: f64, gamma: f64) -> Self {
        let rho = (alpha * alpha + beta * beta + gamma * gamma).sqrt();
        let sinc = if rho < 1e-8 { 1.0 - rho * rho / 6.0 } else { rho.sin() / rho };
        let m = algebra_matrix(alpha, beta, gamma);
        Su2 { a: c(rho.cos(), 0.0) + m[0][0] * sinc, b: m[0][1] * sinc }
    }

    pub fn mul(&self, other: &Su2) -> Su2 {
        Su2 {
            a: self.a * other.a - self.b * other.b.conj(),
            b: self.a * other.b + self.b * other.a.conj(),
        }
    }

    pub fn inverse(&self) -> Su2 {
        Su2 { a: self.a.conj(), b: -self.b }
    }

    pub fn det(&self) -> Complex64 {
        let m = self.matrix();
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// `max |(g g*)_{ij} - δ_{ij}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.matrix();
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let v = m[i][0] * m[j][0].conj() + m[i][1] * m[j][1].conj();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }

    /// Projects back onto the unit sphere of `C²`.
    pub fn renormalize(&mut self) {
        let n = (self.a.norm_sqr() + self.b.norm_sqr()).sqrt();
        self.a /= n;
        self.b /= n;
    }

    /// Rotation angle of `g⁻¹ h`, a bi-invariant distance in `[0, π]`.
    pub fn distance(&self, other: &Su2) -> f64 {
        let rel = self.inverse().mul(other);
        rel.a.re.clamp(-1.0, 1.0).acos()
    }

    /// First row of `g · M` for a generator `M`: the tangent vector of
    /// `t ↦ g exp(tM)` at `t = 0`.
    pub fn tangent(&self, m: &Mat2) -> (Complex64, Complex64) {
        let p = mat2_mul(&self.matrix(), m);
        (p[0][0], p[0][1])
    }
}

fn algebra_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat2 {
    let gens = [Field::Horizontal(0), Field::Horizontal(1), Field::Vertical];
    let coef = [alpha, beta, gamma];
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for (g, &s) in gens.iter().zip(&coef) {
        let m = su2_generator(*g).expect("valid generator");
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += m[i][j] * s;
            }
        }
    }
    out
}

/// Coefficients of a field in the grid's chart derivatives; `None` is zero.
#[derive(Debug, Clone)]
pub struct FieldCoeffs {
    pub per_axis: Vec<Option<Vec<f64>>>,
}

/// Derivatives of a grid function along each grid axis.
#[derive(Debug, Clone)]
pub struct Partials {
    pub d: Vec<Vec<Complex64>>,
}

/// An immutable model space with its grid, measure and vector fields.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    pub geometry: Geometry,
    pub grid_spec: GridSpec,
    pub fd: FdSpec,
    pub grid: TensorGrid,
    /// Density of the reference measure at each grid node.
    pub density: Vec<f64>,
    /// Quadrature weight times density at each grid node.
    pub measure: Vec<f64>,
    /// Horizontal fields in order, followed by the vertical field when present.
    fields: Vec<FieldCoeffs>,
}

impl ModelSpace {
    pub fn new(geometry: Geometry, grid_spec: GridSpec, fd: FdSpec) -> Result<Self> {
        geometry.validate()?;
        if !(fd.step > 0.0 && fd.step < 0.1) {
            return Err(Error::Contract(format!("fd.step must lie in (0, 0.1), got {}", fd.step)));
        }
        let grid = match geometry {
            Geometry::Torus { dim, k_max } => {
                if grid_spec.n < (2 * k_max + 2) as usize {
                    return Err(Error::Contract(format!(
                        "torus grid n={} cannot resolve |k| <= {k_max}",
                        grid_spec.n
                    )));
                }
                if dim > 3 {
                    return Err(Error::Contract("torus grids are limited to dimension 3".into()));
                }
                TensorGrid::new((0..dim).map(|_| Axis::periodic(0.0, TWO_PI, grid_spec.n)).collect())
            }
            Geometry::Heisenberg { radius, .. } => {
                check_3d(&grid_spec)?;
                TensorGrid::new(vec![
                    Axis::legendre(0.0, radius, grid_spec.nr),
                    Axis::periodic(0.0, TWO_PI, grid_spec.ntheta),
                    Axis::periodic(0.0, TWO_PI, grid_spec.nz),
                ])
            }
            Geometry::Su2 { .. } => {
                check_3d(&grid_spec)?;
                TensorGrid::new(vec![
                    Axis::legendre(0.0, 0.5 * PI, grid_spec.nr),
                    Axis::periodic(0.0, TWO_PI, grid_spec.ntheta),
                    Axis::periodic(-PI, PI, grid_spec.nz),
                ])
            }
        };
        let mut model = ModelSpace {
            geometry,
            grid_spec,
            fd,
            grid,
            density: Vec::new(),
            measure: Vec::new(),
            fields: Vec::new(),
        };
        let n = model.grid.len();
        model.density = (0..n).map(|i| model.grid_density(i)).collect();
        model.measure = (0..n).map(|i| model.grid.weight(i) * model.density[i]).collect();
        model.fields = model.build_fields();
        Ok(model)
    }

    pub fn with_defaults(geometry: Geometry) -> Result<Self> {
        let spec = GridSpec::default_for(&geometry);
        Self::new(geometry, spec, FdSpec::default())
    }

    pub fn horizontal_dim(&self) -> usize {
        self.geometry.horizontal_dim()
    }

    pub fn has_vertical(&self) -> bool {
        !matches!(self.geometry, Geometry::Torus { .. })
    }

    /// Total mass of the reference measure on the truncated domain.
    pub fn total_mass(&self) -> f64 {
        match self.geometry {
            Geometry::Torus { .. } | Geometry::Su2 { .. } => 1.0,
            Geometry::Heisenberg { radius, .. } => 2.0 * PI * PI * radius * radius,
        }
    }

    /// The model point of a grid node (Heisenberg nodes are polar on the grid
    /// and Cartesian as points).
    pub fn grid_point(&self, i: usize) -> Point {
        let g = self.grid.coords(i);
        match self.geometry {
            Geometry::Heisenberg { .. } => Point(vec![g[0] * g[1].cos(), g[0] * g[1].sin(), g[2]]),
            _ => Point(g),
        }
    }

    fn grid_density(&self, i: usize) -> f64 {
        let g = self.grid.coords(i);
        match self.geometry {
            Geometry::Torus { dim, .. } => TWO_PI.powi(-(dim as i32)),
            Geometry::Heisenberg { .. } => g[0],
            Geometry::Su2 { .. } => su2_chart_density(g[0]),
        }
    }

    /// `⟨f, g⟩ = ∫ f ḡ dμ` by quadrature.
    pub fn inner(&self, f: &GridFunction, g: &GridFunction) -> Complex64 {
        f.values
            .iter()
            .zip(&g.values)
            .zip(&self.measure)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum()
    }

    pub fn norm(&self, f: &GridFunction) -> f64 {
        f.values
            .iter()
            .zip(&self.measure)
            .map(|(a, w)| a.norm_sqr() * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Integral of a real function given on the grid.
    pub fn integrate_real(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.measure).map(|(v, w)| v * w).sum()
    }

    pub fn tabulate<F: Fn(&Point) -> Complex64>(&self, f: F) -> GridFunction {
        GridFunction::from_values((0..self.grid.len()).map(|i| f(&self.grid_point(i))).collect())
    }

    pub fn partials(&self, f: &GridFunction) -> Partials {
        Partials { d: (0..self.grid.dim()).map(|a| self.grid.partial(a, &f.values)).collect() }
    }

    fn field_index(&self, field: Field) -> Result<usize> {
        let d = self.horizontal_dim();
        match field {
            Field::Horizontal(i) if i < d => Ok(i),
            Field::Horizontal(i) => Err(Error::Domain(format!("field index {i} but model has {d} horizontal fields"))),
            Field::Vertical if self.has_vertical() => Ok(d),
            Field::Vertical => Err(Error::UnsupportedModel("the torus has no vertical field")),
        }
    }

    /// `Σ_j c_j F_j f` for fields `F_j`, from precomputed partials.
    pub fn combine(&self, terms: &[(Field, Complex64)], partials: &Partials) -> Result<GridFunction> {
        let mut out = GridFunction::zeros(self.grid.len());
        for &(field, weight) in terms {
            let coeffs = &self.fields[self.field_index(field)?];
            for (axis, coef) in coeffs.per_axis.iter().enumerate() {
                if let Some(coef) = coef {
                    for ((o, d), cf) in out.values.iter_mut().zip(&partials.d[axis]).zip(coef) {
                        *o += weight * d * *cf;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn apply_field_grid(&self, field: Field, f: &GridFunction) -> Result<GridFunction> {
        self.combine(&[(field, Complex64::new(1.0, 0.0))], &self.partials(f))
    }

    /// `L f = Σ X_i (X_i f)` on the grid.
    pub fn sublaplacian(&self, f: &GridFunction) -> GridFunction {
        let p = self.partials(f);
        let mut out = GridFunction::zeros(self.grid.len());
        for i in 0..self.horizontal_dim() {
            let xf = self.combine(&[(Field::Horizontal(i), Complex64::new(1.0, 0.0))], &p).expect("field exists");
            let xxf = self.apply_field_grid(Field::Horizontal(i), &xf).expect("field exists");
            out.axpy(Complex64::new(1.0, 0.0), &xxf);
        }
        out
    }

    fn build_fields(&self) -> Vec<FieldCoeffs> {
        let n = self.grid.len();
        match self.geometry {
            Geometry::Torus { dim, .. } => (0..dim)
                .map(|i| FieldCoeffs {
                    per_axis: (0..dim).map(|a| if a == i { Some(vec![1.0; n]) } else { None }).collect(),
                })
                .collect(),
            Geometry::Heisenberg { .. } => {
                // X = cos θ ∂r − (sin θ / r) ∂θ − (r sin θ / 2) ∂z
                // Y = sin θ ∂r + (cos θ / r) ∂θ + (r cos θ / 2) ∂z
                let mut x = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                let mut y = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                for i in 0..n {
                    let g = self.grid.coords(i);
                    let (r, s, co) = (g[0], g[1].sin(), g[1].cos());
                    x[0][i] = co;
                    x[1][i] = -s / r;
                    x[2][i] = -0.5 * r * s;
                    y[0][i] = s;
                    y[1][i] = co / r;
                    y[2][i] = 0.5 * r * co;
                }
                let [x0, x1, x2] = x;
                let [y0, y1, y2] = y;
                vec![
                    FieldCoeffs { per_axis: vec![Some(x0), Some(x1), Some(x2)] },
                    FieldCoeffs { per_axis: vec![Some(y0), Some(y1), Some(y2)] },
                    FieldCoeffs { per_axis: vec![None, None, Some(vec![1.0; n])] },
                ]
            }
            Geometry::Su2 { .. } => {
                let fields = [Field::Horizontal(0), Field::Horizontal(1), Field::Vertical];
                let mut out = Vec::new();
                for field in fields {
                    let mut cols = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                    for i in 0..n {
                        let g = self.grid.coords(i);
                        let cf = su2_chart_field(field, g[0], g[1], g[2]);
                        for a in 0..3 {
                            cols[a][i] = cf[a];
                        }
                    }
                    let [c0, c1, c2] = cols;
                    out.push(FieldCoeffs { per_axis: vec![Some(c0), Some(c1), Some(c2)] });
                }
                out
            }
        }
    }
}

fn check_3d(spec: &GridSpec) -> Result<()> {
    if spec.nr < 4 || spec.ntheta < 4 || spec.nz < 4 {
        return Err(Error::Contract(format!(
            "grid.nr, grid.ntheta and grid.nz must be at least 4, got {}, {}, {}",
            spec.nr, spec.ntheta, spec.nz
        )));
    }
    Ok(())
}

/// Normalized Haar density in chart coordinates, `sin r cos r / (2π²)`.
fn su2_chart_density(r: f64) -> f64 {
    (r.sin() * r.cos()).max(0.0) / (2.0 * PI * PI)
}

/// Chart components `(∂r, ∂θ, ∂z)` of `X`, `Y`, `Z`, with `φ = θ − 2z`.
fn su2_chart_field(field: Field, r: f64, theta: f64, z: f64) -> [f64; 3] {
    let phi = theta - 2.0 * z;
    let (s, c) = phi.sin_cos();
    match field {
        Field::Horizontal(0) => [c, -2.0 * s / (2.0 * r).sin(), -r.tan() * s],
        Field::Horizontal(_) => [s, 2.0 * c / (2.0 * r).sin(), r.tan() * c],
        Field::Vertical => [0.0, 0.0, 1.0],
    }
}

fn check_point(model: &ModelSpace, pt: &Point) -> Result<()> {
    let p = &pt.0;
    let want = match model.geometry {
        Geometry::Torus { dim, .. } => dim,
        _ => 3,
    };
    if p.len() != want {
        return Err(Error::Domain(format!("expected {want} coordinates, got {}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite coordinate in {p:?}")));
    }
    let inside = |v: f64, lo: f64, hi: f64| v >= lo - CHART_SLACK && v <= hi + CHART_SLACK;
    let ok = match model.geometry {
        Geometry::Torus { .. } => p.iter().all(|&v| inside(v, 0.0, TWO_PI)),
        Geometry::Heisenberg { .. } => true,
        Geometry::Su2 { .. } => inside(p[0], 0.0, 0.5 * PI) && inside(p[1], 0.0, TWO_PI) && inside(p[2], -PI, PI),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("point {p:?} outside the {} chart", model.geometry.name())))
    }
}

fn finite(v: Complex64, pt: &[f64]) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("function value at {pt:?}")))
    }
}

/// `(F f)(pt)` for a black-box `f` by central differences with step
/// `model.fd.step` (optionally Richardson-extrapolated).
pub fn apply_field<F: Fn(&Point) -> Complex64>(model: &ModelSpace, field: Field, f: &F, pt: &Point) -> Result<Complex64> {
    check_point(model, pt)?;
    model.field_index(field)?;
    let diff = |h: f64| -> Result<Complex64> {
        let plus = shifted(model, field, pt, h)?;
        let minus = shifted(model, field, pt, -h)?;
        let fp = finite(f(&plus), &plus.0)?;
        let fm = finite(f(&minus), &minus.0)?;
        Ok((fp - fm) / (2.0 * h))
    };
    let h = model.fd.step;
    if model.fd.richardson {
        Ok((diff(0.5 * h)? * 4.0 - diff(h)?) / 3.0)
    } else {
        diff(h)
    }
}

/// Point reached by flowing `t` along the field, to first order for the
/// coordinate models (exactly linear there) and exactly on SU(2).
fn shifted(model: &ModelSpace, field: Field, pt: &Point, t: f64) -> Result<Point> {
    let p = &pt.0;
    Ok(match model.geometry {
        Geometry::Torus { .. } => {
            let mut q = p.clone();
            if let Field::Horizontal(i) = field {
                q[i] += t;
            }
            Point(q)
        }
        Geometry::Heisenberg { .. } => {
            // Flow lines of X, Y and Z are straight: X moves (x, z) by (t, -y t / 2).
            let (x, y, z) = (p[0], p[1], p[2]);
            match field {
                Field::Horizontal(0) => Point(vec![x + t, y, z - 0.5 * y * t]),
                Field::Horizontal(_) => Point(vec![x, y + t, z + 0.5 * x * t]),
                Field::Vertical => Point(vec![x, y, z + t]),
            }
        }
        Geometry::Su2 { .. } => {
            let g = Su2::from_chart(p[0], p[1], p[2]);
            let (alpha, beta, gamma) = match field {
                Field::Horizontal(0) => (t, 0.0, 0.0),
                Field::Horizontal(_) => (0.0, t, 0.0),
                Field::Vertical => (0.0, 0.0, t),
            };
            let h = g.mul(&Su2::exp_algebra(alpha, beta, gamma));
            Point(h.to_chart().to_vec())
        }
    })
}

/// Density of the reference measure in chart coordinates at `pt`.
pub fn haar_density(model: &ModelSpace, pt: &Point) -> Result<f64> {
    check_point(model, pt)?;
    let p = &pt.0;
    Ok(match model.geometry {
        Geometry::Torus { dim, .. } => TWO_PI.powi(-(dim as i32)),
        Geometry::Heisenberg { .. } => p[0].hypot(p[1]),
        Geometry::Su2 { .. } => su2_chart_density(p[0]),
    })
}

/// `max |([a, b] − Σ c_j E_j) f|` over probe functions and points, with all
/// derivatives taken by nested finite differences.
pub fn commutator_residual<F: Fn(&Point) -> Complex64>(
    model: &ModelSpace,
    a: Field,
    b: Field,
    expected: &[(Field, Complex64)],
    probes: &[F],
    points: &[Point],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for f in probes {
        let bf = |q: &Point| apply_field(model, b, f, q).unwrap_or(Complex64::new(f64::NAN, 0.0));
        let af = |q: &Point| apply_field(model, a, f, q).unwrap_or(Complex64::new(f64::NAN, 0.0));
        for pt in points {
            let abf = apply_field(model, a, &bf, pt)?;
            let baf = apply_field(model, b, &af, pt)?;
            let mut rhs = Complex64::new(0.0, 0.0);
            for &(e, w) in expected {
                rhs += w * apply_field(model, e, f, pt)?;
            }
            worst = worst.max((abf - baf - rhs).norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::TestRng;
    use alloc::boxed::Box;

    // Independent oracle: chart Jacobian into R⁴ by finite differences.
    fn su2_real(g: &Su2) -> [f64; 4] {
        [g.a.re, g.a.im, g.b.re, g.b.im]
    }

    /// 4×3 Jacobian of the chart into `R⁴` by fourth-order central differences.
    fn su2_chart_jacobian(r: f64, theta: f64, z: f64, h: f64) -> [[f64; 3]; 4] {
        let mut jac = [[0.0; 3]; 4];
        for a in 0..3 {
            let at = |t: f64| {
                let mut p = [r, theta, z];
                p[a] += t;
                su2_real(&Su2::from_chart(p[0], p[1], p[2]))
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            for k in 0..4 {
                jac[k][a] = (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * h);
            }
        }
        jac
    }

    fn gram(j: &[[f64; 3]; 4]) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                g[a][b] = (0..4).map(|k| j[k][a] * j[k][b]).sum();
            }
        }
        g
    }

    fn det3(m: &[[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn solve3(m: &[[f64; 3]; 3], rhs: &[f64; 3]) -> [f64; 3] {
        let d = det3(m);
        let mut out = [0.0; 3];
        for col in 0..3 {
            let mut mc = *m;
            for row in 0..3 {
                mc[row][col] = rhs[row];
            }
            out[col] = det3(&mc) / d;
        }
        out
    }

    /// Normalized Haar density in chart coordinates: the volume element of the
    /// chart embedding into the unit sphere of `C²`, divided by its volume `2π²`.
    fn fd_chart_density(r: f64, theta: f64, z: f64, h: f64) -> f64 {
        let g = gram(&su2_chart_jacobian(r, theta, z, h));
        det3(&g).max(0.0).sqrt() / (2.0 * PI * PI)
    }

    /// Chart-coordinate components of the left-invariant field with generator `m`.
    fn fd_chart_field(r: f64, theta: f64, z: f64, m: &Mat2, h: f64) -> [f64; 3] {
        let jac = su2_chart_jacobian(r, theta, z, h);
        let (da, db) = Su2::from_chart(r, theta, z).tangent(m);
        let v = [da.re, da.im, db.re, db.im];
        let mut rhs = [0.0; 3];
        for a in 0..3 {
            rhs[a] = (0..4).map(|k| jac[k][a] * v[k]).sum();
        }
        solve3(&gram(&jac), &rhs)
    }

    #[test]
    fn torus_field_differentiates_exponential() {
        let model = ModelSpace::with_defaults(Geometry::Torus { dim: 1, k_max: 4 }).unwrap();
        let f = |p: &Point| Complex64::new(0.0, 3.0 * p.0[0]).exp();
        let v = apply_field(&model, Field::Horizontal(0), &f, &Point::new(&[0.0])).unwrap();
        assert!((v - Complex64::new(0.0, 3.0)).norm() < 1e-7);
    }

    #[test]
    fn heisenberg_x_on_z_coordinate() {
        let model = ModelSpace::new(Geometry::heisenberg(), GridSpec { n: 0, nr: 8, ntheta: 4, nz: 4 }, FdSpec::default()).unwrap();
        let f = |p: &Point| Complex64::new(p.0[2], 0.0);
        let v = apply_field(&model, Field::Horizontal(0), &f, &Point::new(&[0.0, 2.0, 0.0])).unwrap();
        assert!((v - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn out_of_chart_points_are_rejected() {
        let model = ModelSpace::new(Geometry::su2(), GridSpec { n: 0, nr: 8, ntheta: 4, nz: 4 }, FdSpec::default()).unwrap();
        let f = |_: &Point| Complex64::new(1.0, 0.0);
        let err = apply_field(&model, Field::Vertical, &f, &Point::new(&[2.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::Domain(_))));
        let bad = |_: &Point| Complex64::new(f64::NAN, 0.0);
        let err = apply_field(&model, Field::Vertical, &bad, &Point::new(&[0.5, 1.0, 0.0]));
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn su2_chart_is_unitary_with_unit_determinant() {
        let mut rng = TestRng::new(11);
        for _ in 0..200 {
            let r = rng.uniform(0.0, 0.5 * PI);
            let th = rng.uniform(0.0, TWO_PI);
            let z = rng.uniform(-PI, PI);
            let g = Su2::from_chart(r, th, z);
            assert!((g.det() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            assert!(g.unitarity_defect() < 1e-12);
            // corrected (2,2) entry: cos r e^{-iz}
            let m = g.matrix();
            assert!((m[1][1] - Complex64::new(0.0, -z).exp() * r.cos()).norm() < 1e-12);
            assert!((m[0][0] - Complex64::new(0.0, z).exp() * r.cos()).norm() < 1e-12);
            assert!((m[0][1] - Complex64::new(0.0, th - z).exp() * r.sin()).norm() < 1e-12);
            let back = g.to_chart();
            assert!((back[0] - r).abs() < 1e-10);
            assert!((Su2::from_chart(back[0], back[1], back[2]).a - g.a).norm() < 1e-12);
        }
    }

    #[test]
    fn su2_generators_satisfy_the_bracket_relations() {
        let m = |f| su2_generator(f).unwrap();
        let bracket = |a: &Mat2, b: &Mat2| {
            let ab = mat2_mul(a, b);
            let ba = mat2_mul(b, a);
            let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] = ab[i][j] - ba[i][j];
                }
            }
            out
        };
        let (x, y, z) = (m(Field::Horizontal(0)), m(Field::Horizontal(1)), m(Field::Vertical));
        for (lhs, target) in [(bracket(&x, &y), z), (bracket(&y, &z), x), (bracket(&z, &x), y)] {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(lhs[i][j], target[i][j] * 2.0);
                }
            }
        }
    }

    #[test]
    fn quadrature_masses() {
        let t = ModelSpace::with_defaults(Geometry::Torus { dim: 2, k_max: 16 }).unwrap();
        assert!((t.integrate_real(&vec![1.0; t.grid.len()]) - 1.0).abs() < 1e-10);
        let h = ModelSpace::new(Geometry::heisenberg(), GridSpec { n: 0, nr: 40, ntheta: 8, nz: 8 }, FdSpec::default()).unwrap();
        let mass = h.integrate_real(&vec![1.0; h.grid.len()]);
        assert!((mass - h.total_mass()).abs() < 1e-9 * h.total_mass());
        assert!(h.measure.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn su2_haar_density_integrates_to_one() {
        let model = ModelSpace::new(Geometry::su2(), GridSpec { n: 0, nr: 40, ntheta: 8, nz: 8 }, FdSpec::default()).unwrap();
        let mass = model.integrate_real(&vec![1.0; model.grid.len()]);
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
        for i in (0..model.grid.len()).step_by(37) {
            let g = model.grid.coords(i);
            let oracle = fd_chart_density(g[0], g[1], g[2], 1e-4);
            assert!((model.density[i] - oracle).abs() < 1e-10);
        }
        assert!(haar_density(&model, &Point::new(&[0.0, 1.0, 0.0])).unwrap().abs() < 1e-9);
    }

    #[test]
    fn su2_chart_fields_match_chart_jacobian() {
        let mut rng = TestRng::new(8);
        for _ in 0..50 {
            let (r, th, z) = (rng.uniform(0.05, 1.5), rng.uniform(0.0, TWO_PI), rng.uniform(-PI, PI));
            for f in [Field::Horizontal(0), Field::Horizontal(1), Field::Vertical] {
                let exact = su2_chart_field(f, r, th, z);
                let fd = fd_chart_field(r, th, z, &su2_generator(f).unwrap(), 1e-4);
                for a in 0..3 {
                    assert!((exact[a] - fd[a]).abs() < 1e-8 * (1.0 + exact[a].abs()), "{f:?}");
                }
            }
        }
    }

    #[test]
    fn point_densities() {
        let t = ModelSpace::with_defaults(Geometry::torus(2)).unwrap();
        let d = haar_density(&t, &Point::new(&[1.0, 2.0])).unwrap();
        assert!((d - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        let h = ModelSpace::new(Geometry::heisenberg(), GridSpec { n: 0, nr: 8, ntheta: 4, nz: 4 }, FdSpec::default()).unwrap();
        assert!((haar_density(&h, &Point::new(&[2.0, 0.0, 1.0])).unwrap() - 2.0).abs() < 1e-15);
    }

    fn heis_probes() -> Vec<impl Fn(&Point) -> Complex64> {
        (1..=3)
            .map(|m| {
                move |p: &Point| {
                    let (x, y, z) = (p.0[0], p.0[1], p.0[2]);
                    Complex64::new(0.0, m as f64 * z).exp() * (0.3 * x * m as f64).cos() * (0.7 * y + 0.2 * x * y).sin()
                }
            })
            .collect()
    }

    #[test]
    fn heisenberg_commutators() {
        let model = ModelSpace::new(Geometry::heisenberg(), GridSpec { n: 0, nr: 8, ntheta: 4, nz: 4 }, FdSpec::default()).unwrap();
        let pts: Vec<Point> = [[0.3, -1.2, 0.5], [2.0, 0.7, 4.0], [-1.5, 1.5, 2.0]].iter().map(|p| Point::new(p)).collect();
        let one = Complex64::new(1.0, 0.0);
        let probes = heis_probes();
        let r = commutator_residual(&model, Field::Horizontal(0), Field::Horizontal(1), &[(Field::Vertical, one)], &probes, &pts).unwrap();
        assert!(r < 1e-6, "[X,Y]-Z residual {r}");
        let r = commutator_residual(&model, Field::Horizontal(0), Field::Vertical, &[], &probes, &pts).unwrap();
        assert!(r < 1e-6, "[X,Z] residual {r}");
    }

    #[test]
    fn su2_commutators_on_matrix_entries() {
        let model = ModelSpace::new(Geometry::su2(), GridSpec { n: 0, nr: 8, ntheta: 4, nz: 4 }, FdSpec::default()).unwrap();
        let probes: Vec<Box<dyn Fn(&Point) -> Complex64>> = vec![
            Box::new(|p: &Point| Su2::from_chart(p.0[0], p.0[1], p.0[2]).a),
            Box::new(|p: &Point| Su2::from_chart(p.0[0], p.0[1], p.0[2]).b),
            Box::new(|p: &Point| {
                let g = Su2::from_chart(p.0[0], p.0[1], p.0[2]);
                g.a * g.a * g.b.conj()
            }),
        ];
        let mut rng = TestRng::new(5);
        let pts: Vec<Point> = (0..6)
            .map(|_| Point::new(&[rng.uniform(0.2, 1.3), rng.uniform(0.2, 6.0), rng.uniform(-2.5, 2.5)]))
            .collect();
        let two = Complex64::new(2.0, 0.0);
        let (x, y, z) = (Field::Horizontal(0), Field::Horizontal(1), Field::Vertical);
        for (a, b, e) in [(x, y, z), (y, z, x), (z, x, y)] {
            let r = commutator_residual(&model, a, b, &[(e, two)], &probes, &pts).unwrap();
            assert!(r < 1e-5, "{a:?},{b:?} residual {r}");
        }
    }

    #[test]
    fn grid_fields_match_pointwise_fields() {
        let model = ModelSpace::new(Geometry::su2(), GridSpec { n: 0, nr: 24, ntheta: 8, nz: 12 }, FdSpec::default()).unwrap();
        let f = |p: &Point| {
            let g = Su2::from_chart(p.0[0], p.0[1], p.0[2]);
            g.a * g.a * g.b
        };
        let tab = model.tabulate(f);
        for field in [Field::Horizontal(0), Field::Horizontal(1), Field::Vertical] {
            let on_grid = model.apply_field_grid(field, &tab).unwrap();
            for i in (0..model.grid.len()).step_by(53) {
                let pt = model.grid_point(i);
                let v = apply_field(&model, field, &f, &pt).unwrap();
                assert!((on_grid.values[i] - v).norm() < 1e-6, "{field:?} at {pt:?}");
            }
        }
    }
}
