//! Eigenbases of `−L`, spectral coefficients, functional calculus and ladder
//! actions of first-order fields.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use core::cell::RefCell;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{Field, Geometry, ModelSpace, Point};
use crate::grid::GridFunction;
use crate::quad::{integrate_to_infinity, Tolerance};
use crate::special::{jacobi, laguerre};

/// Label of an eigenfunction of `−L`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeIndex {
    /// `e^{ik·x}`.
    Torus(Vec<i64>),
    /// `φ_k^λ(r) e^{−iλz}` with `φ_k^λ(r) = L_k^0(|λ| r²/2) e^{−|λ| r²/4}`.
    Heisenberg { lambda: i64, k: u32 },
    /// `Φ_{n,k} = e^{inz} cos^{|n|} r · P_k^{(0,|n|)}(cos 2r)`.
    Su2 { n: i64, k: u32 },
}

impl ModeIndex {
    /// Eigenvalue `ν ≥ 0` of `−L`.
    pub fn eigenvalue(&self) -> f64 {
        match self {
            ModeIndex::Torus(k) => k.iter().map(|&v| (v * v) as f64).sum(),
            ModeIndex::Heisenberg { lambda, k } => ((2 * *k + 1) as f64) * lambda.unsigned_abs() as f64,
            ModeIndex::Su2 { n, k } => {
                let (n, k) = (n.unsigned_abs() as f64, *k as f64);
                4.0 * k * (k + n + 1.0) + 2.0 * n
            }
        }
    }

    pub fn is_zero_mode(&self) -> bool {
        match self {
            ModeIndex::Torus(k) => k.iter().all(|&v| v == 0),
            ModeIndex::Heisenberg { .. } => false,
            ModeIndex::Su2 { n, k } => *n == 0 && *k == 0,
        }
    }

    /// Integer-tuple form used for serialization.
    pub fn tuple(&self) -> Vec<i64> {
        match self {
            ModeIndex::Torus(k) => k.clone(),
            ModeIndex::Heisenberg { lambda, k } => vec![*lambda, *k as i64],
            ModeIndex::Su2 { n, k } => vec![*n, *k as i64],
        }
    }

    pub fn from_tuple(geometry: &Geometry, t: &[i64]) -> Result<Self> {
        let mode = match geometry {
            Geometry::Torus { dim, .. } => {
                if t.len() != *dim {
                    return Err(Error::Domain(format!("torus mode needs {dim} entries, got {t:?}")));
                }
                ModeIndex::Torus(t.to_vec())
            }
            Geometry::Heisenberg { .. } | Geometry::Su2 { .. } => {
                if t.len() != 2 || t[1] < 0 {
                    return Err(Error::Domain(format!("mode tuple must be (integer, k >= 0), got {t:?}")));
                }
                let k = u32::try_from(t[1]).map_err(|_| Error::ModeOutOfRange(format!("{t:?}")))?;
                if matches!(geometry, Geometry::Heisenberg { .. }) {
                    ModeIndex::Heisenberg { lambda: t[0], k }
                } else {
                    ModeIndex::Su2 { n: t[0], k }
                }
            }
        };
        check_mode(geometry, &mode)?;
        Ok(mode)
    }

    pub fn label(&self) -> String {
        match self {
            ModeIndex::Torus(k) => format!("k={k:?}"),
            ModeIndex::Heisenberg { lambda, k } => format!("(lambda={lambda},k={k})"),
            ModeIndex::Su2 { n, k } => format!("(n={n},k={k})"),
        }
    }
}

impl Serialize for ModeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        let t = self.tuple();
        let mut seq = s.serialize_seq(Some(t.len()))?;
        for v in &t {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

/// Whether `mode` belongs to the geometry and lies inside its truncation.
pub fn check_mode(geometry: &Geometry, mode: &ModeIndex) -> Result<()> {
    let ok = match (geometry, mode) {
        (Geometry::Torus { dim, k_max }, ModeIndex::Torus(k)) => {
            if k.len() != *dim {
                return Err(Error::Domain(format!("torus mode {k:?} has wrong dimension")));
            }
            k.iter().all(|v| v.abs() <= *k_max)
        }
        (Geometry::Heisenberg { lambda_max, k_max, .. }, ModeIndex::Heisenberg { lambda, k }) => {
            *lambda != 0 && lambda.abs() <= *lambda_max && k <= k_max
        }
        (Geometry::Su2 { n_max, k_max }, ModeIndex::Su2 { n, k }) => n.abs() <= *n_max && k <= k_max,
        _ => return Err(Error::Domain(format!("mode {} does not belong to {}", mode.label(), geometry.name()))),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ModeOutOfRange(mode.label()))
    }
}

/// All zero-mode-free modes inside the truncation, in ascending order.
pub fn modes(geometry: &Geometry) -> Vec<ModeIndex> {
    let mut out = Vec::new();
    match *geometry {
        Geometry::Torus { dim, k_max } => {
            let side = (2 * k_max + 1) as usize;
            let total = side.pow(dim as u32);
            for flat in 0..total {
                let mut rest = flat;
                let mut k = vec![0i64; dim];
                for slot in k.iter_mut().rev() {
                    *slot = (rest % side) as i64 - k_max;
                    rest /= side;
                }
                let m = ModeIndex::Torus(k);
                if !m.is_zero_mode() {
                    out.push(m);
                }
            }
        }
        Geometry::Heisenberg { lambda_max, k_max, .. } => {
            for lambda in -lambda_max..=lambda_max {
                if lambda == 0 {
                    continue;
                }
                for k in 0..=k_max {
                    out.push(ModeIndex::Heisenberg { lambda, k });
                }
            }
        }
        Geometry::Su2 { n_max, k_max } => {
            for n in -n_max..=n_max {
                for k in 0..=k_max {
                    let m = ModeIndex::Su2 { n, k };
                    if !m.is_zero_mode() {
                        out.push(m);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

fn heisenberg_radial(lambda: i64, k: u32, r: f64) -> f64 {
    let l = lambda.unsigned_abs() as f64;
    laguerre(k, 0.0, 0.5 * l * r * r) * (-0.25 * l * r * r).exp()
}

fn su2_profile(n: i64, k: u32, r: f64) -> f64 {
    let an = n.unsigned_abs();
    r.cos().powi(an as i32) * jacobi(k, 0.0, an as f64, (2.0 * r).cos())
}

/// Value of the (unnormalized) eigenfunction at a chart point.
pub fn eigenfunction_eval(geometry: &Geometry, mode: &ModeIndex, pt: &Point) -> Result<Complex64> {
    check_mode(geometry, mode)?;
    let p = &pt.0;
    let want = match geometry {
        Geometry::Torus { dim, .. } => *dim,
        _ => 3,
    };
    if p.len() != want {
        return Err(Error::Domain(format!("expected {want} coordinates, got {}", p.len())));
    }
    Ok(match mode {
        ModeIndex::Torus(k) => {
            let phase: f64 = k.iter().zip(p).map(|(&kk, &x)| kk as f64 * x).sum();
            Complex64::new(0.0, phase).exp()
        }
        ModeIndex::Heisenberg { lambda, k } => {
            let r = p[0].hypot(p[1]);
            Complex64::new(0.0, -(*lambda as f64) * p[2]).exp() * heisenberg_radial(*lambda, *k, r)
        }
        ModeIndex::Su2 { n, k } => Complex64::new(0.0, *n as f64 * p[2]).exp() * su2_profile(*n, *k, p[0]),
    })
}

/// Unnormalized eigenfunction on the model grid.
pub fn eigenfunction_grid(model: &ModelSpace, mode: &ModeIndex) -> Result<GridFunction> {
    check_mode(&model.geometry, mode)?;
    let n = model.grid.len();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let g = model.grid.coords(i);
        values.push(match mode {
            ModeIndex::Torus(k) => {
                let phase: f64 = k.iter().zip(&g).map(|(&kk, &x)| kk as f64 * x).sum();
                Complex64::new(0.0, phase).exp()
            }
            ModeIndex::Heisenberg { lambda, k } => {
                Complex64::new(0.0, -(*lambda as f64) * g[2]).exp() * heisenberg_radial(*lambda, *k, g[0])
            }
            ModeIndex::Su2 { n, k } => Complex64::new(0.0, *n as f64 * g[2]).exp() * su2_profile(*n, *k, g[0]),
        });
    }
    Ok(GridFunction::from_values(values))
}

/// Eigenfunction divided by its quadrature `L²` norm.
pub fn eigenfunction_eval_normalized(model: &ModelSpace, mode: &ModeIndex, pt: &Point) -> Result<Complex64> {
    let norm = model.norm(&eigenfunction_grid(model, mode)?);
    Ok(eigenfunction_eval(&model.geometry, mode, pt)? / norm)
}

/// The truncated eigenbasis of a model with quadrature normalization constants.
#[derive(Debug, Clone)]
pub struct Basis<'a> {
    pub model: &'a ModelSpace,
    pub modes: Vec<ModeIndex>,
    norms: BTreeMap<ModeIndex, f64>,
}

impl<'a> Basis<'a> {
    pub fn new(model: &'a ModelSpace) -> Self {
        let modes = modes(&model.geometry);
        let norms = modes
            .iter()
            .map(|m| {
                let g = eigenfunction_grid(model, m).expect("enumerated modes are in range");
                (m.clone(), model.norm(&g))
            })
            .collect();
        Basis { model, modes, norms }
    }

    /// Quadrature `L²` norm of the unnormalized eigenfunction.
    pub fn norm(&self, mode: &ModeIndex) -> Result<f64> {
        self.norms.get(mode).copied().ok_or_else(|| Error::ModeOutOfRange(mode.label()))
    }

    pub fn normalized_grid(&self, mode: &ModeIndex) -> Result<GridFunction> {
        let n = self.norm(mode)?;
        Ok(eigenfunction_grid(self.model, mode)?.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn eval_normalized(&self, mode: &ModeIndex, pt: &Point) -> Result<Complex64> {
        Ok(eigenfunction_eval(&self.model.geometry, mode, pt)? / self.norm(mode)?)
    }
}

/// Finite map from modes to coefficients in the normalized eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    pub geometry: Geometry,
    coeffs: BTreeMap<ModeIndex, Complex64>,
}

impl SpectralCoefficients {
    pub fn new(geometry: Geometry) -> Self {
        Self { geometry, coeffs: BTreeMap::new() }
    }

    pub fn from_pairs(geometry: Geometry, pairs: &[(ModeIndex, Complex64)]) -> Result<Self> {
        let mut out = Self::new(geometry);
        for (m, c) in pairs {
            out.add_to(m.clone(), *c)?;
        }
        Ok(out)
    }

    /// Sets a coefficient. The zero mode is rejected: work happens in the
    /// mean-zero sector.
    pub fn insert(&mut self, mode: ModeIndex, c: Complex64) -> Result<()> {
        check_mode(&self.geometry, &mode)?;
        if mode.is_zero_mode() {
            return Err(Error::Contract("the zero mode is excluded from spectral coefficients".into()));
        }
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient of {}", mode.label())));
        }
        self.coeffs.insert(mode, c);
        Ok(())
    }

    pub fn add_to(&mut self, mode: ModeIndex, c: Complex64) -> Result<()> {
        let prev = self.coeffs.get(&mode).copied().unwrap_or_default();
        self.insert(mode, prev + c)
    }

    pub fn get(&self, mode: &ModeIndex) -> Complex64 {
        self.coeffs.get(mode).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModeIndex, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            coeffs: self.coeffs.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self, other⟩ = Σ a_m conj(b_m)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs.iter().map(|(m, a)| a * other.get(m).conj()).sum()
    }

    /// Largest coefficient difference against another map.
    pub fn max_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, a) in &self.coeffs {
            worst = worst.max((a - other.get(m)).norm());
        }
        for (m, b) in &other.coeffs {
            worst = worst.max((self.get(m) - b).norm());
        }
        worst
    }

    /// Entries as `(mode tuple, re, im)`.
    pub fn entries(&self) -> Vec<(Vec<i64>, f64, f64)> {
        self.coeffs.iter().map(|(m, c)| (m.tuple(), c.re, c.im)).collect()
    }
}

/// Result of projecting a grid function onto the truncated basis.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub coeffs: SpectralCoefficients,
    /// `‖f − Σ c_m Φ̂_m‖ / ‖f‖`; nonzero for inputs that are not band-limited.
    pub residual: f64,
}

pub fn expand(basis: &Basis, f: &GridFunction) -> Result<Expansion> {
    let model = basis.model;
    let mut coeffs = SpectralCoefficients::new(model.geometry.clone());
    let mut recon = GridFunction::zeros(f.len());
    for mode in &basis.modes {
        let phi = basis.normalized_grid(mode)?;
        let c = model.inner(f, &phi);
        if c.norm() > 0.0 {
            coeffs.insert(mode.clone(), c)?;
            recon.axpy(c, &phi);
        }
    }
    let total = model.norm(f);
    let residual = if total > 0.0 { model.norm(&f.sub(&recon)) / total } else { 0.0 };
    Ok(Expansion { coeffs, residual })
}

pub fn synthesize(basis: &Basis, coeffs: &SpectralCoefficients, pt: &Point) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for (m, c) in coeffs.iter() {
        total += c * basis.eval_normalized(m, pt)?;
    }
    Ok(total)
}

pub fn synthesize_grid(basis: &Basis, coeffs: &SpectralCoefficients) -> Result<GridFunction> {
    let mut out = GridFunction::zeros(basis.model.grid.len());
    for (m, c) in coeffs.iter() {
        out.axpy(*c, &basis.normalized_grid(m)?);
    }
    Ok(out)
}

/// Multiplies every coefficient by `ψ(ν(mode))`.
pub fn apply_spectral<F: Fn(f64) -> f64>(coeffs: &SpectralCoefficients, psi: F) -> Result<SpectralCoefficients> {
    let mut out = SpectralCoefficients::new(coeffs.geometry.clone());
    for (m, c) in coeffs.iter() {
        let nu = m.eigenvalue();
        let factor = psi(nu);
        if !factor.is_finite() {
            return Err(Error::Domain(format!("multiplier undefined at nu={nu} for mode {}", m.label())));
        }
        out.insert(m.clone(), c * factor)?;
    }
    Ok(out)
}

/// Poisson semigroup `e^{−t√ν}` from the heat semigroup through
/// `P_t = t/(2√π) ∫ e^{−t²/4s} H_s s^{−3/2} ds`, by adaptive quadrature.
pub fn poisson_via_subordination(coeffs: &SpectralCoefficients, t: f64, tol: Tolerance) -> Result<SpectralCoefficients> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("subordination needs t > 0, got {t}")));
    }
    let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut out = SpectralCoefficients::new(coeffs.geometry.clone());
    for (m, c) in coeffs.iter() {
        let nu = m.eigenvalue();
        let factor = match cache.get(&nu.to_bits()) {
            Some(v) => *v,
            None => {
                let pref = t / (2.0 * PI.sqrt());
                let (v, _) = integrate_to_infinity(
                    |s| {
                        if s <= 0.0 {
                            0.0
                        } else {
                            pref * (-t * t / (4.0 * s) - s * nu).exp() * s.powf(-1.5)
                        }
                    },
                    0.0,
                    tol,
                )?;
                cache.insert(nu.to_bits(), v);
                v
            }
        };
        out.insert(m.clone(), c * factor)?;
    }
    Ok(out)
}

/// A grid function with a Rayleigh-quotient eigenvalue estimate of `−L`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub function: GridFunction,
    /// `ν' = −Re⟨L g, g⟩ / ‖g‖²`.
    pub eigenvalue: f64,
    /// `‖(−L − ν') g‖ / ‖g‖`.
    pub residual: f64,
    /// Set when the field annihilated its input; `function` is then zero.
    pub annihilated: bool,
}

impl EigenPair {
    pub fn verified(&self, tol: f64) -> bool {
        self.annihilated || self.residual < tol
    }
}

/// Output norms below this fraction of `√ν ‖Φ‖` count as annihilation.
pub const ANNIHILATION_TOL: f64 = 1e-8;

pub fn rayleigh(model: &ModelSpace, g: &GridFunction) -> (f64, f64) {
    let lg = model.sublaplacian(g);
    let n2 = model.inner(g, g).re;
    let nu = -model.inner(&lg, g).re / n2;
    let mut res = lg.clone();
    res.axpy(Complex64::new(nu, 0.0), g);
    (nu, model.norm(&res) / n2.sqrt())
}

/// First-order operators with ladder action on eigenfunctions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderField {
    /// Complex gradient `W = X + iY`.
    W,
    /// `W̄ = X − iY`.
    WBar,
    Z,
    X(usize),
}

impl LadderField {
    pub fn terms(self) -> Vec<(Field, Complex64)> {
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            LadderField::W => vec![(Field::Horizontal(0), one), (Field::Horizontal(1), i)],
            LadderField::WBar => vec![(Field::Horizontal(0), one), (Field::Horizontal(1), -i)],
            LadderField::Z => vec![(Field::Vertical, one)],
            LadderField::X(j) => vec![(Field::Horizontal(j), one)],
        }
    }
}

/// Applies a field to the normalized grid eigenfunction and certifies the
/// image as an eigenfunction.
pub fn field_ladder(basis: &Basis, field: LadderField, mode: &ModeIndex) -> Result<EigenPair> {
    let model = basis.model;
    if matches!(field, LadderField::W | LadderField::WBar) && !model.has_vertical() {
        return Err(Error::UnsupportedModel("the complex gradient needs a Heisenberg or SU(2) model"));
    }
    let phi = basis.normalized_grid(mode)?;
    ladder_from(model, field, &phi, mode.eigenvalue())
}

/// Ladder action on an arbitrary grid function of eigenvalue `nu`.
pub fn ladder_from(model: &ModelSpace, field: LadderField, phi: &GridFunction, nu: f64) -> Result<EigenPair> {
    let out = model.combine(&field.terms(), &model.partials(phi))?;
    Ok(certify(model, out, nu, model.norm(phi)))
}

fn certify(model: &ModelSpace, out: GridFunction, nu: f64, input_norm: f64) -> EigenPair {
    if model.norm(&out) < ANNIHILATION_TOL * nu.max(1.0).sqrt() * input_norm {
        return EigenPair { function: GridFunction::zeros(out.len()), eigenvalue: 0.0, residual: 0.0, annihilated: true };
    }
    let (eigenvalue, residual) = rayleigh(model, &out);
    EigenPair { function: out, eigenvalue, residual, annihilated: false }
}

/// Ladder images `WΦ`, `W̄Φ` and the measured `Z`-eigenvalue of one
/// normalized basis function.
#[derive(Debug, Clone)]
pub struct LadderEntry {
    pub phi: GridFunction,
    pub up: EigenPair,
    pub down: EigenPair,
    /// `⟨ZΦ, Φ⟩ / ‖Φ‖²`.
    pub z_eigenvalue: Complex64,
}

/// Lazily filled cache of certified ladder entries. A residual above `tol`
/// is an error naming the mode.
#[derive(Debug)]
pub struct LadderTable {
    pub tol: f64,
    entries: RefCell<BTreeMap<ModeIndex, Rc<LadderEntry>>>,
}

impl LadderTable {
    pub fn new(tol: f64) -> Self {
        Self { tol, entries: RefCell::new(BTreeMap::new()) }
    }

    /// Builds the entries for `modes` up front.
    pub fn build(basis: &Basis, modes: &[ModeIndex], tol: f64) -> Result<Self> {
        let table = Self::new(tol);
        for m in modes {
            table.entry(basis, m)?;
        }
        Ok(table)
    }

    pub fn entry(&self, basis: &Basis, mode: &ModeIndex) -> Result<Rc<LadderEntry>> {
        if let Some(e) = self.entries.borrow().get(mode) {
            return Ok(e.clone());
        }
        let model = basis.model;
        if !model.has_vertical() {
            return Err(Error::UnsupportedModel("ladder tables need a Heisenberg or SU(2) model"));
        }
        let phi = basis.normalized_grid(mode)?;
        let p = model.partials(&phi);
        let nu = mode.eigenvalue();
        let pair = |field: LadderField| -> Result<EigenPair> {
            let out = model.combine(&field.terms(), &p)?;
            let pair = certify(model, out, nu, 1.0);
            if pair.residual > self.tol {
                return Err(Error::LadderResidual { mode: format!("{:?} {}", field, mode.label()), residual: pair.residual });
            }
            Ok(pair)
        };
        let up = pair(LadderField::W)?;
        let down = pair(LadderField::WBar)?;
        let zphi = model.combine(&LadderField::Z.terms(), &p)?;
        let z_eigenvalue = model.inner(&zphi, &phi) / model.inner(&phi, &phi).re;
        let entry = Rc::new(LadderEntry { phi, up, down, z_eigenvalue });
        self.entries.borrow_mut().insert(mode.clone(), entry.clone());
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.entries.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn worst_residual(&self) -> f64 {
        self.entries.borrow().values().fold(0.0, |m, e| m.max(e.up.residual).max(e.down.residual))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FdSpec, GridSpec};
    use crate::test_support::TestRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn heis() -> ModelSpace {
        ModelSpace::with_defaults(Geometry::heisenberg()).unwrap()
    }

    fn su2() -> ModelSpace {
        ModelSpace::with_defaults(Geometry::su2()).unwrap()
    }

    #[test]
    fn eigenvalue_formulas() {
        assert_eq!(ModeIndex::Su2 { n: 1, k: 0 }.eigenvalue(), 2.0);
        assert_eq!(ModeIndex::Heisenberg { lambda: 3, k: 2 }.eigenvalue(), 15.0);
        assert_eq!(ModeIndex::Heisenberg { lambda: -3, k: 2 }.eigenvalue(), 15.0);
        assert_eq!(ModeIndex::Torus(vec![1, -2]).eigenvalue(), 5.0);
    }

    #[test]
    fn pointwise_eigenfunction_values() {
        let h = Geometry::heisenberg();
        let v = eigenfunction_eval(&h, &ModeIndex::Heisenberg { lambda: 1, k: 0 }, &Point::new(&[0.0, 0.0, 0.0])).unwrap();
        assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        // L_1^0(x) = 1 − x at x = |λ| r² / 2 = 1
        let v = eigenfunction_eval(&h, &ModeIndex::Heisenberg { lambda: 2, k: 1 }, &Point::new(&[1.0, 0.0, 0.0])).unwrap();
        assert!((v.re - (1.0 - 1.0) * (-0.5f64).exp()).abs() < 1e-15);
        let s = Geometry::su2();
        let v = eigenfunction_eval(&s, &ModeIndex::Su2 { n: 0, k: 0 }, &Point::new(&[0.4, 1.0, -2.0])).unwrap();
        assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        let far = eigenfunction_eval(&h, &ModeIndex::Heisenberg { lambda: 7, k: 0 }, &Point::new(&[0.0, 0.0, 0.0]));
        assert!(matches!(far, Err(Error::ModeOutOfRange(_))));
    }

    #[test]
    fn heisenberg_normalization_matches_laguerre_orthogonality() {
        // ∫ |φ_k^λ|² r dr dθ dz = 4π² / |λ|
        let model = heis();
        let basis = Basis::new(&model);
        for m in &basis.modes {
            if let ModeIndex::Heisenberg { lambda, .. } = m {
                let oracle = (4.0 * PI * PI / lambda.unsigned_abs() as f64).sqrt();
                assert!((basis.norm(m).unwrap() - oracle).abs() < 1e-9 * oracle, "{}", m.label());
            }
        }
    }

    #[test]
    fn su2_normalization_matches_jacobi_orthogonality() {
        let model = su2();
        let basis = Basis::new(&model);
        for m in &basis.modes {
            if let ModeIndex::Su2 { n, k } = m {
                let oracle = (1.0 / (2 * *k as i64 + n.abs() + 1) as f64).sqrt();
                assert!((basis.norm(m).unwrap() - oracle).abs() < 1e-10, "{}", m.label());
            }
        }
    }

    fn gram_defect(model: &ModelSpace) -> f64 {
        let basis = Basis::new(model);
        let fns: Vec<GridFunction> = basis.modes.iter().map(|m| basis.normalized_grid(m).unwrap()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..fns.len() {
            for j in i..fns.len() {
                let g = model.inner(&fns[i], &fns[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }

    #[test]
    fn orthonormal_bases() {
        assert!(gram_defect(&heis()) < 1e-8);
        assert!(gram_defect(&su2()) < 1e-8);
        let t = ModelSpace::with_defaults(Geometry::Torus { dim: 1, k_max: 16 }).unwrap();
        assert!(gram_defect(&t) < 1e-12);
    }

    #[test]
    fn torus_cosine_expansion() {
        let model = ModelSpace::with_defaults(Geometry::Torus { dim: 1, k_max: 16 }).unwrap();
        let basis = Basis::new(&model);
        let f = model.tabulate(|p| c(p.0[0].cos(), 0.0));
        let e = expand(&basis, &f).unwrap();
        assert!(e.residual < 1e-13);
        assert!((e.coeffs.get(&ModeIndex::Torus(vec![1])) - c(0.5, 0.0)).norm() < 1e-14);
        assert!((e.coeffs.get(&ModeIndex::Torus(vec![-1])) - c(0.5, 0.0)).norm() < 1e-14);
        assert!(e.coeffs.iter().filter(|(_, v)| v.norm() > 1e-13).count() == 2);
    }

    #[test]
    fn heisenberg_single_mode_expansion() {
        let model = heis();
        let basis = Basis::new(&model);
        let mode = ModeIndex::Heisenberg { lambda: 1, k: 0 };
        let f = basis.normalized_grid(&mode).unwrap();
        let e = expand(&basis, &f).unwrap();
        assert!((e.coeffs.get(&mode) - c(1.0, 0.0)).norm() < 1e-9);
        assert!(e.coeffs.iter().filter(|(m, _)| *m != &mode).all(|(_, v)| v.norm() < 1e-9));
    }

    #[test]
    fn su2_round_trip() {
        let model = su2();
        let basis = Basis::new(&model);
        let mut rng = TestRng::new(3);
        let mut coeffs = SpectralCoefficients::new(model.geometry.clone());
        for _ in 0..5 {
            let m = &basis.modes[(rng.uniform(0.0, basis.modes.len() as f64)) as usize];
            coeffs.add_to(m.clone(), c(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))).unwrap();
        }
        let g = synthesize_grid(&basis, &coeffs).unwrap();
        let back = expand(&basis, &g).unwrap();
        assert!(back.coeffs.max_diff(&coeffs) < 1e-8);
        let pt = Point::new(&[0.3, 2.0, 1.0]);
        let direct: Complex64 = coeffs
            .iter()
            .map(|(m, v)| v * eigenfunction_eval_normalized(&model, m, &pt).unwrap())
            .sum();
        assert!((synthesize(&basis, &coeffs, &pt).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn zero_mode_is_rejected() {
        let mut s = SpectralCoefficients::new(Geometry::su2());
        assert!(matches!(s.insert(ModeIndex::Su2 { n: 0, k: 0 }, c(1.0, 0.0)), Err(Error::Contract(_))));
        let mut t = SpectralCoefficients::new(Geometry::torus(1));
        assert!(t.insert(ModeIndex::Torus(vec![0]), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn multipliers_and_semigroup() {
        let g = Geometry::Torus { dim: 1, k_max: 16 };
        let f = SpectralCoefficients::from_pairs(g.clone(), &[(ModeIndex::Torus(vec![2]), c(1.0, 0.0))]).unwrap();
        let p = apply_spectral(&f, |nu| (-nu.sqrt()).exp()).unwrap();
        assert!((p.get(&ModeIndex::Torus(vec![2])).re - (-2.0f64).exp()).abs() < 1e-15);
        assert!((p.get(&ModeIndex::Torus(vec![2])).re - 0.135335).abs() < 1e-6);
        let bad = apply_spectral(&f, |nu| 1.0 / (nu - 4.0));
        assert!(matches!(bad, Err(Error::Domain(_))));
        let a = apply_spectral(&apply_spectral(&f, |nu| (-0.3 * nu).exp()).unwrap(), |nu| (-0.5 * nu).exp()).unwrap();
        let b = apply_spectral(&f, |nu| (-0.8 * nu).exp()).unwrap();
        assert!(a.max_diff(&b) < 1e-15);
    }

    #[test]
    fn subordination_matches_poisson_multiplier() {
        let g = Geometry::Torus { dim: 2, k_max: 3 };
        let f = SpectralCoefficients::from_pairs(
            g,
            &[(ModeIndex::Torus(vec![1, 0]), c(1.0, 0.0)), (ModeIndex::Torus(vec![3, 0]), c(0.0, 2.0))],
        )
        .unwrap();
        for t in [1.0, 2.0] {
            let sub = poisson_via_subordination(&f, t, Tolerance::default()).unwrap();
            let direct = apply_spectral(&f, |nu| (-t * nu.sqrt()).exp()).unwrap();
            assert!(sub.max_diff(&direct) < 1e-9);
        }
        let one = SpectralCoefficients::from_pairs(Geometry::torus(1), &[(ModeIndex::Torus(vec![1]), c(1.0, 0.0))]).unwrap();
        let v = poisson_via_subordination(&one, 1.0, Tolerance::default()).unwrap();
        assert!((v.get(&ModeIndex::Torus(vec![1])).re - (-1.0f64).exp()).abs() < 1e-6);
        let nine = SpectralCoefficients::from_pairs(Geometry::torus(1), &[(ModeIndex::Torus(vec![3]), c(1.0, 0.0))]).unwrap();
        let v = poisson_via_subordination(&nine, 2.0, Tolerance::default()).unwrap();
        assert!((v.get(&ModeIndex::Torus(vec![3])).re - (-6.0f64).exp()).abs() < 1e-6);
        assert!(poisson_via_subordination(&nine, 0.0, Tolerance::default()).is_err());
    }

    #[test]
    fn heisenberg_ladders() {
        let model = heis();
        let basis = Basis::new(&model);
        let m = ModeIndex::Heisenberg { lambda: 1, k: 0 };
        let z = field_ladder(&basis, LadderField::Z, &m).unwrap();
        let phi = basis.normalized_grid(&m).unwrap();
        assert!(z.function.sub(&phi.scaled(c(0.0, -1.0))).max_abs() < 1e-12);
        assert!((z.eigenvalue - 1.0).abs() < 1e-8);
        let w = field_ladder(&basis, LadderField::W, &m).unwrap();
        assert!(w.annihilated);
        for (lambda, k) in [(1, 1), (2, 3), (6, 8), (-1, 0), (-6, 8), (3, 4)] {
            let m = ModeIndex::Heisenberg { lambda, k };
            let w = field_ladder(&basis, LadderField::W, &m).unwrap();
            assert!(w.residual < 1e-6, "{} residual {}", m.label(), w.residual);
            let expected = m.eigenvalue() - 2.0 * lambda as f64;
            assert!((w.eigenvalue - expected).abs() < 1e-8, "{} got {}", m.label(), w.eigenvalue);
        }
    }

    #[test]
    fn su2_ladders_satisfy_intertwining_consistency() {
        let model = su2();
        let basis = Basis::new(&model);
        for (n, k) in [(1, 0), (2, 3), (-3, 1), (6, 8), (-6, 8), (0, 4)] {
            let m = ModeIndex::Su2 { n, k };
            let w = field_ladder(&basis, LadderField::W, &m).unwrap();
            if w.annihilated {
                continue;
            }
            assert!(w.residual < 1e-5, "{} residual {}", m.label(), w.residual);
            // (√ν' + √ν)(√ν − √ν') WΦ = (ν − ν') WΦ must equal (4iZ − 4) WΦ
            let zw = model.apply_field_grid(Field::Vertical, &w.function).unwrap();
            let mut rhs = zw.scaled(c(0.0, 4.0));
            rhs.axpy(c(-4.0, 0.0), &w.function);
            let nu = m.eigenvalue();
            let lhs = w.function.scaled(c(nu - w.eigenvalue, 0.0));
            let rel = model.norm(&lhs.sub(&rhs)) / model.norm(&w.function);
            assert!(rel < 1e-5, "{} consistency {rel}", m.label());
        }
        let w = field_ladder(&basis, LadderField::W, &ModeIndex::Su2 { n: -2, k: 0 }).unwrap();
        assert!(w.annihilated);
    }

    fn intertwining_residual(model: &ModelSpace, f: &GridFunction, z_coef: Complex64, shift: f64) -> f64 {
        // ‖(W L − (L + z_coef Z + shift) W) f‖ / ‖W f‖
        let w = |g: &GridFunction| model.combine(&LadderField::W.terms(), &model.partials(g)).unwrap();
        let wf = w(f);
        let lhs = w(&model.sublaplacian(f));
        let mut rhs = model.sublaplacian(&wf);
        rhs.axpy(z_coef, &model.apply_field_grid(Field::Vertical, &wf).unwrap());
        rhs.axpy(c(shift, 0.0), &wf);
        model.norm(&lhs.sub(&rhs)) / model.norm(&wf)
    }

    #[test]
    fn intertwining_relations_on_probes() {
        let model = heis();
        let basis = Basis::new(&model);
        let coeffs = SpectralCoefficients::from_pairs(
            model.geometry.clone(),
            &[
                (ModeIndex::Heisenberg { lambda: 1, k: 2 }, c(1.0, 0.5)),
                (ModeIndex::Heisenberg { lambda: -2, k: 1 }, c(-0.3, 0.0)),
            ],
        )
        .unwrap();
        let f = synthesize_grid(&basis, &coeffs).unwrap();
        assert!(intertwining_residual(&model, &f, c(0.0, -2.0), 0.0) < 1e-5);

        let model = su2();
        let basis = Basis::new(&model);
        let coeffs = SpectralCoefficients::from_pairs(
            model.geometry.clone(),
            &[(ModeIndex::Su2 { n: 2, k: 1 }, c(1.0, 0.0)), (ModeIndex::Su2 { n: -1, k: 3 }, c(0.2, 0.7))],
        )
        .unwrap();
        let f = synthesize_grid(&basis, &coeffs).unwrap();
        assert!(intertwining_residual(&model, &f, c(0.0, -4.0), 4.0) < 1e-5);
    }

    #[test]
    fn self_and_skew_adjointness() {
        for model in [heis(), su2()] {
            let basis = Basis::new(&model);
            let pick = |i: usize| basis.normalized_grid(&basis.modes[i]).unwrap();
            let (mut f, mut g) = (pick(3), pick(20));
            f.axpy(c(0.5, 0.2), &pick(40));
            g.axpy(c(-0.1, 1.0), &pick(41));
            let a = model.inner(&model.sublaplacian(&f), &g);
            let b = model.inner(&f, &model.sublaplacian(&g));
            assert!((a - b).norm() < 1e-8);
            for field in [Field::Horizontal(0), Field::Horizontal(1), Field::Vertical] {
                let a = model.inner(&model.apply_field_grid(field, &f).unwrap(), &g);
                let b = model.inner(&f, &model.apply_field_grid(field, &g).unwrap());
                assert!((a + b).norm() < 1e-8, "{field:?}");
            }
        }
    }

    #[test]
    fn mode_tuples_round_trip() {
        let g = Geometry::heisenberg();
        let m = ModeIndex::Heisenberg { lambda: -3, k: 2 };
        assert_eq!(ModeIndex::from_tuple(&g, &m.tuple()).unwrap(), m);
        assert!(ModeIndex::from_tuple(&g, &[0, 1]).is_err());
        assert!(ModeIndex::from_tuple(&g, &[1]).is_err());
    }

    #[test]
    fn default_grid_check_uses_fd_spec() {
        let model = ModelSpace::new(Geometry::su2(), GridSpec { n: 0, nr: 48, ntheta: 8, nz: 24 }, FdSpec::default()).unwrap();
        assert_eq!(model.grid.len(), 48 * 8 * 24);
    }
}
