//! Spectral evaluation of the transforms `T_A`, Riesz transforms, the
//! commutator `[W, √−L]` and the right-hand sides of its identities.
//!
//! For input eigen-data `Φ` of eigenvalue `ν` the Poisson factor `P_y` acts as
//! `e^{−y√ν̃}`, with `ν̃ = ν + |c|` for the constant potential `V = c`. The
//! inner first-order operator
//! `Σ a_kl X_k X_l − Σ a_{k,d+1} X_k √ + Σ a_{d+1,l} √ X_l + a_{d+1,d+1}(L + V)`
//! splits `Φ` into ladder images of eigenvalue `ν'`, and each image is weighted
//! by `∫ y e^{−y(√ν̃ + √ν̃')} dy = (√ν̃ + √ν̃')^{−2}`.

use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, ModelSpace};
use crate::grid::GridFunction;
use crate::hermitian::CMatrix;
use crate::quad::{integrate_to_infinity, Tolerance};
use crate::spectral::{ladder_from, synthesize_grid, Basis, LadderField, LadderTable, ModeIndex, SpectralCoefficients};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The matrix `A` acting on `(∇, ∂_y)` and the constant potential `V = c ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub matrix: CMatrix,
    pub potential: f64,
}

impl TransformSpec {
    pub fn new(matrix: CMatrix, potential: f64) -> Result<Self> {
        if matrix.n < 2 {
            return Err(Error::Contract("transform matrix must be at least 2x2".into()));
        }
        if !(potential <= 0.0 && potential.is_finite()) {
            return Err(Error::Contract(format!("potential must be a finite constant <= 0, got {potential}")));
        }
        if matrix.data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("transform matrix entry".into()));
        }
        Ok(Self { matrix, potential })
    }

    /// `A_i` with `a_{i,d+1} = −1`, `a_{d+1,i} = 1`; `T_{A_i} = T_i`.
    pub fn riesz_axis(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(Error::Domain(format!("axis {i} out of range for d = {d}")));
        }
        let mut m = CMatrix::zeros(d + 1);
        m.set(i, d, c(-1.0, 0.0));
        m.set(d, i, c(1.0, 0.0));
        Self::new(m, 0.0)
    }

    /// The complex-gradient matrix with `a_{1,3} = 1`, `a_{2,3} = i`,
    /// `a_{3,1} = −1`, `a_{3,2} = −i`.
    pub fn complex_gradient() -> Self {
        let mut m = CMatrix::zeros(3);
        m.set(0, 2, c(1.0, 0.0));
        m.set(1, 2, c(0.0, 1.0));
        m.set(2, 0, c(-1.0, 0.0));
        m.set(2, 1, c(0.0, -1.0));
        Self { matrix: m, potential: 0.0 }
    }

    pub fn with_potential(mut self, potential: f64) -> Result<Self> {
        self.potential = potential;
        Self::new(self.matrix, self.potential)
    }

    /// Horizontal dimension `d`.
    pub fn dim(&self) -> usize {
        self.matrix.n - 1
    }

    pub fn norm(&self) -> f64 {
        self.matrix.spectral_norm()
    }

    /// `A*` (conjugate transpose), same potential.
    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), potential: self.potential }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self { matrix: self.matrix.scale(alpha), potential: self.potential }
    }

    /// `⟨Av, v⟩ = 0` for all real `v`, i.e. `A + Aᵀ = 0`.
    pub fn is_orthogonal(&self) -> bool {
        let n = self.matrix.n;
        (0..n).all(|i| (0..n).all(|j| (self.matrix.get(i, j) + self.matrix.get(j, i)).norm() == 0.0))
    }

    fn a(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j)
    }

    /// Whether any horizontal-horizontal entry is nonzero.
    pub fn has_horizontal_block(&self) -> bool {
        let d = self.dim();
        (0..d).any(|i| (0..d).any(|j| self.a(i, j).norm() != 0.0))
    }

    fn shift(&self) -> f64 {
        -self.potential
    }
}

/// How the `y`-integral `∫ y e^{−ys} dy` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum YIntegral {
    ClosedForm,
    Quadrature,
}

fn y_weight(s: f64, method: YIntegral) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("y-integral needs a positive rate, got {s}")));
    }
    match method {
        YIntegral::ClosedForm => Ok(1.0 / (s * s)),
        YIntegral::Quadrature => {
            // substitute y = u / s so the rate is 1 and the decay scale is fixed
            let tol = Tolerance { abs: 1e-15, rel: 1e-13, max_intervals: 2000 };
            let (v, _) = integrate_to_infinity(|u| u * (-u).exp(), 0.0, tol)?;
            Ok(v / (s * s))
        }
    }
}

/// Fourier multiplier of `T_A` on the torus at frequency `k`.
pub fn torus_multiplier(spec: &TransformSpec, k: &[i64], method: YIntegral) -> Result<Complex64> {
    let d = spec.dim();
    if k.len() != d {
        return Err(Error::Domain(format!("frequency {k:?} does not match d = {d}")));
    }
    let nu_t = k.iter().map(|&v| (v * v) as f64).sum::<f64>() + spec.shift();
    let root = nu_t.sqrt();
    let ik: Vec<Complex64> = k.iter().map(|&v| c(0.0, v as f64)).collect();
    // left factor (ik, +√ν̃), right factor (ik, −√ν̃)
    let left = |i: usize| if i < d { ik[i] } else { c(root, 0.0) };
    let right = |i: usize| if i < d { ik[i] } else { c(-root, 0.0) };
    let mut numer = c(0.0, 0.0);
    for i in 0..=d {
        for j in 0..=d {
            numer += spec.a(i, j) * left(i) * right(j);
        }
    }
    Ok(numer * y_weight(2.0 * root, method)?)
}

/// Output of `T_A`: Fourier coefficients on the torus, grid values otherwise.
#[derive(Debug, Clone)]
pub enum Transformed {
    Coefficients(SpectralCoefficients),
    Grid(GridFunction),
}

impl Transformed {
    pub fn to_grid(&self, basis: &Basis) -> Result<GridFunction> {
        match self {
            Transformed::Coefficients(co) => synthesize_grid(basis, co),
            Transformed::Grid(g) => Ok(g.clone()),
        }
    }

    pub fn coefficients(&self) -> Option<&SpectralCoefficients> {
        match self {
            Transformed::Coefficients(co) => Some(co),
            Transformed::Grid(_) => None,
        }
    }
}

fn check_spec(geometry: &Geometry, spec: &TransformSpec) -> Result<()> {
    if spec.dim() != geometry.horizontal_dim() {
        return Err(Error::Contract(format!(
            "transform matrix is {}x{} but {} needs {}x{}",
            spec.matrix.n,
            spec.matrix.n,
            geometry.name(),
            geometry.horizontal_dim() + 1,
            geometry.horizontal_dim() + 1
        )));
    }
    if !matches!(geometry, Geometry::Torus { .. }) && spec.has_horizontal_block() {
        return Err(Error::UnsupportedModel(
            "second-order horizontal entries of A are only evaluated on the torus",
        ));
    }
    Ok(())
}

/// Weights of `W` and `W̄` in `(X, Y)`: `X = ½W + ½W̄`, `Y = −(i/2)W + (i/2)W̄`.
fn ladder_weights(field: LadderField) -> [Complex64; 2] {
    match field {
        LadderField::W => [c(0.5, 0.0), c(0.0, -0.5)],
        _ => [c(0.5, 0.0), c(0.0, 0.5)],
    }
}

/// Coefficient of a ladder image `Ψ` (eigenvalue `ν'`) in `T_A Φ`.
fn ladder_coefficient(spec: &TransformSpec, field: LadderField, nu: f64, nu_out: f64, method: YIntegral) -> Result<Complex64> {
    let d = spec.dim();
    let (r_in, r_out) = ((nu + spec.shift()).sqrt(), (nu_out.max(0.0) + spec.shift()).sqrt());
    let alpha = ladder_weights(field);
    let mut numer = c(0.0, 0.0);
    for k in 0..d {
        numer += (-spec.a(k, d) * r_in + spec.a(d, k) * r_out) * alpha[k];
    }
    Ok(numer * y_weight(r_in + r_out, method)?)
}

/// Coefficient of `Φ` itself in `T_A Φ` (the `a_{d+1,d+1}(L + V)` entry).
fn diagonal_coefficient(spec: &TransformSpec, nu: f64, method: YIntegral) -> Result<Complex64> {
    let d = spec.dim();
    let nu_t = nu + spec.shift();
    Ok(-spec.a(d, d) * nu_t * y_weight(2.0 * nu_t.sqrt(), method)?)
}

/// `T_A f` for `f` given by normalized-basis coefficients.
pub fn t_a_apply(
    basis: &Basis,
    table: &LadderTable,
    spec: &TransformSpec,
    f: &SpectralCoefficients,
    method: YIntegral,
) -> Result<Transformed> {
    let geometry = &basis.model.geometry;
    check_spec(geometry, spec)?;
    if let Geometry::Torus { .. } = geometry {
        let mut out = SpectralCoefficients::new(geometry.clone());
        for (m, v) in f.iter() {
            if let ModeIndex::Torus(k) = m {
                out.insert(m.clone(), v * torus_multiplier(spec, k, method)?)?;
            }
        }
        return Ok(Transformed::Coefficients(out));
    }
    let mut out = GridFunction::zeros(basis.model.grid.len());
    for (m, v) in f.iter() {
        let e = table.entry(basis, m)?;
        let nu = m.eigenvalue();
        out.axpy(v * diagonal_coefficient(spec, nu, method)?, &e.phi);
        for (field, img) in [(LadderField::W, &e.up), (LadderField::WBar, &e.down)] {
            if !img.annihilated {
                out.axpy(v * ladder_coefficient(spec, field, nu, img.eigenvalue, method)?, &img.function);
            }
        }
    }
    Ok(Transformed::Grid(out))
}

/// A grid eigenfunction of `−L` with its eigenvalue.
#[derive(Debug, Clone)]
pub struct EigenPiece {
    pub function: GridFunction,
    pub nu: f64,
}

/// `c_m Φ̂_m` pieces of a coefficient map.
pub fn pieces_from_coeffs(basis: &Basis, f: &SpectralCoefficients) -> Result<Vec<EigenPiece>> {
    f.iter()
        .map(|(m, v)| Ok(EigenPiece { function: basis.normalized_grid(m)?.scaled(*v), nu: m.eigenvalue() }))
        .collect()
}

/// `T_A` on a sum of grid eigenfunctions, with ladder images computed and
/// certified on the fly (residual below `ladder_tol`).
pub fn t_a_pieces(
    model: &ModelSpace,
    spec: &TransformSpec,
    pieces: &[EigenPiece],
    method: YIntegral,
    ladder_tol: f64,
) -> Result<GridFunction> {
    check_spec(&model.geometry, spec)?;
    if !model.has_vertical() {
        return Err(Error::UnsupportedModel("grid pieces are evaluated on Heisenberg or SU(2) only"));
    }
    let mut out = GridFunction::zeros(model.grid.len());
    for (idx, p) in pieces.iter().enumerate() {
        if !(p.nu > 0.0) {
            return Err(Error::Contract(format!("piece {idx} has eigenvalue {} (zero sector excluded)", p.nu)));
        }
        out.axpy(diagonal_coefficient(spec, p.nu, method)?, &p.function);
        for field in [LadderField::W, LadderField::WBar] {
            let img = ladder_from(model, field, &p.function, p.nu)?;
            if img.annihilated {
                continue;
            }
            if img.residual > ladder_tol {
                return Err(Error::LadderResidual { mode: format!("{field:?} of piece {idx}"), residual: img.residual });
            }
            out.axpy(ladder_coefficient(spec, field, p.nu, img.eigenvalue, method)?, &img.function);
        }
    }
    Ok(out)
}

/// Riesz transform `X_i(−L)^{−1/2}` on the torus: multiplier `i k_i / |k|`.
pub fn riesz_apply(f: &SpectralCoefficients, axis: usize) -> Result<SpectralCoefficients> {
    let Geometry::Torus { dim, .. } = f.geometry else {
        return Err(Error::UnsupportedModel("riesz_apply is defined on the torus"));
    };
    if axis >= dim {
        return Err(Error::Domain(format!("axis {axis} out of range for T^{dim}")));
    }
    let mut out = SpectralCoefficients::new(f.geometry.clone());
    for (m, v) in f.iter() {
        if let ModeIndex::Torus(k) = m {
            let mult = c(0.0, k[axis] as f64 / m.eigenvalue().sqrt());
            out.insert(m.clone(), v * mult)?;
        }
    }
    Ok(out)
}

/// `[W, √−L] f = Σ c_m (√ν − √ν') WΦ̂_m`.
pub fn commutator_w_sqrtl(basis: &Basis, table: &LadderTable, f: &SpectralCoefficients) -> Result<GridFunction> {
    if !basis.model.has_vertical() {
        return Err(Error::UnsupportedModel("the commutator needs a Heisenberg or SU(2) model"));
    }
    let mut out = GridFunction::zeros(basis.model.grid.len());
    for (m, v) in f.iter() {
        let e = table.entry(basis, m)?;
        if e.up.annihilated {
            continue;
        }
        let factor = m.eigenvalue().sqrt() - e.up.eigenvalue.max(0.0).sqrt();
        out.axpy(v * factor, &e.up.function);
    }
    Ok(out)
}

/// Right-hand side of the commutator identity: `2i 𝒯 Z f` on Heisenberg and
/// `𝒯 (4iZ + 4) f` on SU(2), where `𝒯 = ∫ y P_y (W√ + √W) P_y dy = T_{−𝒜}`.
pub fn rhs_identity_apply(basis: &Basis, table: &LadderTable, f: &SpectralCoefficients, method: YIntegral) -> Result<GridFunction> {
    let geometry = &basis.model.geometry;
    let mut zf = SpectralCoefficients::new(geometry.clone());
    for (m, v) in f.iter() {
        let z = table.entry(basis, m)?.z_eigenvalue;
        let factor = match geometry {
            Geometry::Heisenberg { .. } => c(0.0, 2.0) * z,
            Geometry::Su2 { .. } => c(0.0, 4.0) * z + 4.0,
            Geometry::Torus { .. } => return Err(Error::UnsupportedModel("the commutator identity needs a vertical field")),
        };
        zf.insert(m.clone(), v * factor)?;
    }
    let script_t = TransformSpec::complex_gradient().scaled(c(-1.0, 0.0));
    match t_a_apply(basis, table, &script_t, &zf, method)? {
        Transformed::Grid(g) => Ok(g),
        Transformed::Coefficients(_) => unreachable!("non-torus output is a grid function"),
    }
}

/// `‖lhs − rhs‖ / max(‖lhs‖, ‖rhs‖)`, or the absolute gap when both sides are
/// below `floor`.
pub fn identity_discrepancy(model: &ModelSpace, lhs: &GridFunction, rhs: &GridFunction, floor: f64) -> f64 {
    let gap = model.norm(&lhs.sub(rhs));
    let scale = model.norm(lhs).max(model.norm(rhs));
    if scale < floor {
        gap
    } else {
        gap / scale
    }
}

/// Test input for [`adjoint_check`].
#[derive(Debug, Clone)]
pub enum Probe {
    Coeffs(SpectralCoefficients),
    Pieces(Vec<EigenPiece>),
}

/// `|⟨T_A f, g⟩ − ⟨f, T_{A*} g⟩|`.
pub fn adjoint_check(
    basis: &Basis,
    table: &LadderTable,
    spec: &TransformSpec,
    f: &Probe,
    g: &Probe,
    method: YIntegral,
) -> Result<f64> {
    let model = basis.model;
    let adj = spec.adjoint();
    if let Geometry::Torus { .. } = model.geometry {
        let (Probe::Coeffs(f), Probe::Coeffs(g)) = (f, g) else {
            return Err(Error::Contract("torus adjoint checks take coefficient probes".into()));
        };
        let tf = t_a_apply(basis, table, spec, f, method)?;
        let tg = t_a_apply(basis, table, &adj, g, method)?;
        let (Some(tf), Some(tg)) = (tf.coefficients(), tg.coefficients()) else {
            unreachable!("torus output is coefficients")
        };
        return Ok((tf.inner(g) - f.inner(tg)).norm());
    }
    let to_pieces = |p: &Probe| -> Result<Vec<EigenPiece>> {
        match p {
            Probe::Coeffs(co) => pieces_from_coeffs(basis, co),
            Probe::Pieces(ps) => Ok(ps.clone()),
        }
    };
    let (fp, gp) = (to_pieces(f)?, to_pieces(g)?);
    let sum = |ps: &[EigenPiece]| {
        let mut s = GridFunction::zeros(model.grid.len());
        for p in ps {
            s.axpy(c(1.0, 0.0), &p.function);
        }
        s
    };
    let tf = t_a_pieces(model, spec, &fp, method, table.tol)?;
    let tg = t_a_pieces(model, &adj, &gp, method, table.tol)?;
    Ok((model.inner(&tf, &sum(&gp)) - model.inner(&sum(&fp), &tg)).norm())
}

/// Coefficient map from `(mode, weight)` pairs.
pub fn combo(geometry: &Geometry, terms: &[(ModeIndex, Complex64)]) -> Result<SpectralCoefficients> {
    SpectralCoefficients::from_pairs(geometry.clone(), terms)
}
