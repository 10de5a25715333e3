//! Forms and spinors on the flat torus: fermion operators, `d`, `d*`, the
//! Dirac operator, their Riesz transforms, and the bundle version of the
//! bilinear Monte Carlo identity (trivial parallel transport, zero curvature).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{mean_se, path_rng, Executor};
use crate::geometry::{Geometry, ModelSpace, Point};
use crate::grid::GridFunction;
use crate::hermitian::CMatrix;
use crate::projection::{green_weight, BilinearEstimate, MCConfig, MIN_PATHS};
use crate::spectral::{Basis, ModeIndex, SpectralCoefficients};
use crate::stochastic::{simulate, PathVisitor, QEvaluator, StartLaw, State, StepView};
use crate::transforms::YIntegral;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Index sets of size `p` in `{0, …, d−1}` as bitmasks, in lexicographic
/// order of their sorted elements: the fiber basis of `p`-forms.
pub fn form_basis(d: usize, p: usize) -> Vec<u32> {
    let mut out: Vec<u32> = (0u32..(1 << d)).filter(|m| m.count_ones() as usize == p).collect();
    out.sort_by_key(|m| (0..d).filter(|i| m & (1 << i) != 0).collect::<Vec<_>>());
    out
}

/// `dx^{i₁} ∧ … ∧ dx^{i_p}` labels (1-based) for the fiber basis.
pub fn form_labels(d: usize, p: usize) -> Vec<String> {
    form_basis(d, p)
        .into_iter()
        .map(|m| {
            let parts: Vec<String> = (0..d).filter(|i| m & (1 << i) != 0).map(|i| format!("dx{}", i + 1)).collect();
            if parts.is_empty() { String::from("1") } else { parts.join("^") }
        })
        .collect()
}

/// Creation operator `a*_i = θ_i ∧ ·` on the full exterior algebra, indexed
/// by bitmask.
pub fn creation(d: usize, i: usize) -> CMatrix {
    let n = 1 << d;
    let mut m = CMatrix::zeros(n);
    for s in 0..n {
        if s & (1 << i) == 0 {
            // sign of moving θ_i past the lower-indexed factors
            let below = (s & ((1 << i) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            m.set(s | (1 << i), s, c(sign, 0.0));
        }
    }
    m
}

/// Annihilation operator `a_i`, the adjoint of [`creation`].
pub fn annihilation(d: usize, i: usize) -> CMatrix {
    creation(d, i).adjoint()
}

/// A `p`-form on `T^d`: per frequency, the components in the order of
/// [`form_basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormField {
    pub dim: usize,
    pub degree: usize,
    pub modes: BTreeMap<Vec<i64>, Vec<Complex64>>,
}

impl FormField {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if dim == 0 || dim > 8 || degree > dim {
            return Err(Error::Domain(format!("no {degree}-forms on T^{dim}")));
        }
        Ok(Self { dim, degree, modes: BTreeMap::new() })
    }

    pub fn fiber_dim(&self) -> usize {
        form_basis(self.dim, self.degree).len()
    }

    pub fn insert(&mut self, k: Vec<i64>, components: Vec<Complex64>) -> Result<()> {
        if k.len() != self.dim || components.len() != self.fiber_dim() {
            return Err(Error::Domain(format!("mode {k:?} with {} components does not fit a {}-form on T^{}", components.len(), self.degree, self.dim)));
        }
        if components.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("coefficient of mode {k:?}")));
        }
        self.modes.insert(k, components);
        Ok(())
    }

    /// Scalar function as a 0-form.
    pub fn from_scalar(f: &SpectralCoefficients) -> Result<Self> {
        let Geometry::Torus { dim, .. } = f.geometry else {
            return Err(Error::UnsupportedModel("forms live on the flat torus"));
        };
        let mut out = Self::new(dim, 0)?;
        for (m, v) in f.iter() {
            if let ModeIndex::Torus(k) = m {
                out.insert(k.clone(), vec![*v])?;
            }
        }
        Ok(out)
    }

    fn has_zero_mode(&self) -> bool {
        self.modes.iter().any(|(k, v)| k.iter().all(|&x| x == 0) && v.iter().any(|c| c.norm() != 0.0))
    }

    /// `⟨f, g⟩ = ∫ Σ_I f_I ḡ_I dμ` for the normalized measure.
    pub fn inner(&self, other: &Self) -> Complex64 {
        let mut s = c(0.0, 0.0);
        for (k, a) in &self.modes {
            if let Some(b) = other.modes.get(k) {
                s += a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>();
            }
        }
        s
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.modes.values().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); self.fiber_dim()];
        for (k, comp) in &self.modes {
            let phase: f64 = k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
            let e = Complex64::new(0.0, phase).exp();
            for (o, v) in out.iter_mut().zip(comp) {
                *o += e * v;
            }
        }
        out
    }

    /// Component functions on a torus grid of matching dimension.
    pub fn to_grid(&self, model: &ModelSpace) -> Result<Vec<GridFunction>> {
        check_model(model, self.dim)?;
        let mut out = vec![GridFunction::zeros(model.grid.len()); self.fiber_dim()];
        for i in 0..model.grid.len() {
            let v = self.eval(&model.grid_point(i).0);
            for (o, x) in out.iter_mut().zip(v) {
                o.values[i] = x;
            }
        }
        Ok(out)
    }

    fn map_modes<F: Fn(&[i64], &[Complex64]) -> Vec<Complex64>>(&self, degree: usize, f: F) -> Result<Self> {
        let mut out = Self::new(self.dim, degree)?;
        for (k, v) in &self.modes {
            out.modes.insert(k.clone(), f(k, v));
        }
        Ok(out)
    }
}

fn check_model(model: &ModelSpace, dim: usize) -> Result<()> {
    match model.geometry {
        Geometry::Torus { dim: d, .. } if d == dim => Ok(()),
        _ => Err(Error::UnsupportedModel("form grids need a torus model of the same dimension")),
    }
}

/// Applies `op` (on the full exterior algebra) to a degree-`p` fiber vector
/// and restricts to degree `q`.
fn apply_between(d: usize, p: usize, q: usize, op: &CMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let mut full = vec![c(0.0, 0.0); 1 << d];
    for (m, x) in form_basis(d, p).into_iter().zip(v) {
        full[m as usize] = *x;
    }
    let image = op.apply(&full);
    form_basis(d, q).into_iter().map(|m| image[m as usize]).collect()
}

/// Symbol `Σ_j i k_j a*_j` of `d` at frequency `k`.
fn d_symbol(k: &[i64]) -> CMatrix {
    let d = k.len();
    let mut m = CMatrix::zeros(1 << d);
    for (j, &kj) in k.iter().enumerate() {
        m = m.add(&creation(d, j).scale(c(0.0, kj as f64)));
    }
    m
}

pub fn exterior_derivative(f: &FormField) -> Result<FormField> {
    if f.degree >= f.dim {
        return Err(Error::Domain(format!("d of a {}-form on T^{} is zero-dimensional", f.degree, f.dim)));
    }
    let (d, p) = (f.dim, f.degree);
    f.map_modes(p + 1, |k, v| apply_between(d, p, p + 1, &d_symbol(k), v))
}

/// `d* = Σ_j (−i k_j) a_j`, the adjoint of `d` for the normalized measure.
pub fn codifferential(f: &FormField) -> Result<FormField> {
    if f.degree == 0 {
        return Err(Error::Domain("d* of a 0-form is zero-dimensional".into()));
    }
    let (d, p) = (f.dim, f.degree);
    f.map_modes(p - 1, |k, v| apply_between(d, p, p - 1, &d_symbol(k).adjoint(), v))
}

/// `−𝓛 = dd* + d*d` per mode: `|k|²` on every degree of the flat torus.
pub fn hodge_laplacian_symbol(k: &[i64]) -> CMatrix {
    let s = d_symbol(k);
    let sa = s.adjoint();
    s.mul(&sa).add(&sa.mul(&s))
}

fn norm_k(k: &[i64]) -> f64 {
    (k.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt()
}

/// `d(−𝓛)^{−1/2} f`, mode-wise `d` followed by `|k|^{−1}`.
pub fn hodge_riesz(f: &FormField) -> Result<FormField> {
    if f.has_zero_mode() {
        return Err(Error::Contract("hodge_riesz needs a zero-mode-free form".into()));
    }
    let mut out = exterior_derivative(f)?;
    out.modes.retain(|k, _| norm_k(k) > 0.0);
    for (k, v) in out.modes.iter_mut() {
        let s = norm_k(k);
        for x in v.iter_mut() {
            *x /= s;
        }
    }
    Ok(out)
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = a.n * b.n;
    let mut m = CMatrix::zeros(n);
    for i in 0..a.n {
        for j in 0..a.n {
            for k in 0..b.n {
                for l in 0..b.n {
                    m.set(i * b.n + k, j * b.n + l, a.get(i, j) * b.get(k, l));
                }
            }
        }
    }
    m
}

/// Clifford generators `c(e_1), …, c(e_d)` on `C^{2^{d/2}}`, `d` even, with
/// `c_i c_j + c_j c_i = −2δ_ij`. Built as `i` times Jordan–Wigner products of
/// Pauli matrices; for `d = 2` they are `iσ₁` and `iσ₂`.
pub fn clifford_generators(d: usize) -> Result<Vec<CMatrix>> {
    if d == 0 || d % 2 != 0 || d > 8 {
        return Err(Error::Domain(format!("spinors are set up for even d in 2..=8, got {d}")));
    }
    let id = CMatrix::identity(2);
    let s1 = CMatrix::from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]]);
    let s2 = CMatrix::from_rows(&[&[c(0.0, 0.0), c(0.0, -1.0)], &[c(0.0, 1.0), c(0.0, 0.0)]]);
    let s3 = CMatrix::from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(-1.0, 0.0)]]);
    let m = d / 2;
    let mut out = Vec::with_capacity(d);
    for j in 0..m {
        for s in [&s1, &s2] {
            let mut g = CMatrix::identity(1);
            for slot in 0..m {
                let factor = match slot.cmp(&j) {
                    core::cmp::Ordering::Less => &s3,
                    core::cmp::Ordering::Equal => s,
                    core::cmp::Ordering::Greater => &id,
                };
                g = kron(&g, factor);
            }
            out.push(g.scale(c(0.0, 1.0)));
        }
    }
    Ok(out)
}

/// Largest entry of `c_i c_j + c_j c_i + 2δ_ij` over all pairs.
pub fn clifford_defect(gens: &[CMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in gens.iter().enumerate() {
        for (j, b) in gens.iter().enumerate() {
            let mut anti = a.mul(b).add(&b.mul(a));
            if i == j {
                anti = anti.add(&CMatrix::identity(a.n).scale(c(2.0, 0.0)));
            }
            worst = worst.max(anti.data.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
    }
    worst
}

/// Spinor field on `T^d` (`d` even): per frequency a vector in the fiber
/// `C^{2^{d/2}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinorField {
    pub dim: usize,
    pub modes: BTreeMap<Vec<i64>, Vec<Complex64>>,
}

impl SpinorField {
    pub fn new(dim: usize) -> Result<Self> {
        clifford_generators(dim)?;
        Ok(Self { dim, modes: BTreeMap::new() })
    }

    pub fn fiber_dim(&self) -> usize {
        1 << (self.dim / 2)
    }

    pub fn insert(&mut self, k: Vec<i64>, v: Vec<Complex64>) -> Result<()> {
        if k.len() != self.dim || v.len() != self.fiber_dim() {
            return Err(Error::Domain(format!("mode {k:?} does not fit a spinor on T^{}", self.dim)));
        }
        self.modes.insert(k, v);
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.modes.values().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); self.fiber_dim()];
        for (k, comp) in &self.modes {
            let phase: f64 = k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
            let e = Complex64::new(0.0, phase).exp();
            for (o, v) in out.iter_mut().zip(comp) {
                *o += e * v;
            }
        }
        out
    }

    pub fn to_grid(&self, model: &ModelSpace) -> Result<Vec<GridFunction>> {
        check_model(model, self.dim)?;
        let mut out = vec![GridFunction::zeros(model.grid.len()); self.fiber_dim()];
        for i in 0..model.grid.len() {
            let v = self.eval(&model.grid_point(i).0);
            for (o, x) in out.iter_mut().zip(v) {
                o.values[i] = x;
            }
        }
        Ok(out)
    }
}

/// Symbol `Σ_j c(e_j) i k_j` of the Dirac operator.
pub fn dirac_symbol(gens: &[CMatrix], k: &[i64]) -> CMatrix {
    let mut m = CMatrix::zeros(gens[0].n);
    for (g, &kj) in gens.iter().zip(k) {
        m = m.add(&g.scale(c(0.0, kj as f64)));
    }
    m
}

pub fn dirac(psi: &SpinorField) -> Result<SpinorField> {
    let gens = clifford_generators(psi.dim)?;
    let mut out = SpinorField::new(psi.dim)?;
    for (k, v) in &psi.modes {
        out.modes.insert(k.clone(), dirac_symbol(&gens, k).apply(v));
    }
    Ok(out)
}

/// `𝐃(−𝐃²)^{−1/2} ψ`: multiplier `i Σ c(e_j) k_j / |k|`, unitary per fiber.
pub fn dirac_riesz(psi: &SpinorField) -> Result<SpinorField> {
    let gens = clifford_generators(psi.dim)?;
    let mut out = SpinorField::new(psi.dim)?;
    for (k, v) in &psi.modes {
        let s = norm_k(k);
        if s == 0.0 {
            if v.iter().any(|x| x.norm() != 0.0) {
                return Err(Error::Contract("dirac_riesz needs a zero-mode-free spinor".into()));
            }
            continue;
        }
        out.modes.insert(k.clone(), dirac_symbol(&gens, k).scale(c(1.0 / s, 0.0)).apply(v));
    }
    Ok(out)
}

/// Bundle data for the Monte Carlo identity: only the flat case is
/// supported, so the curvature potential must vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub curvature: f64,
}

impl BundleSpec {
    pub fn flat() -> Self {
        Self { curvature: 0.0 }
    }
}

struct DbIntegral<'a> {
    q: &'a QEvaluator,
    value: [Complex64; 3],
    dim: usize,
}

impl PathVisitor for DbIntegral<'_> {
    fn step(&mut self, v: &StepView) -> bool {
        let jet = self.q.jet(v.state, v.b);
        for j in 0..self.dim {
            self.value[j] += jet.grad[j] * v.db;
        }
        true
    }
}

/// `E⟨α(Y_τ), ∫_0^τ d Q f(Y_s, B_s) dB_s⟩` for a scalar `f` and a 1-form `α`
/// on the flat torus.
pub fn gv_bundle_bilinear<E: Executor>(
    exec: &E,
    basis: &Basis,
    bundle: &BundleSpec,
    f: &SpectralCoefficients,
    alpha: &FormField,
    config: &MCConfig,
) -> Result<BilinearEstimate> {
    if bundle.curvature != 0.0 {
        return Err(Error::Contract("the bundle identity is implemented for the flat torus only (zero curvature)".into()));
    }
    let Geometry::Torus { dim, .. } = basis.model.geometry else {
        return Err(Error::UnsupportedModel("the bundle identity is implemented on the flat torus"));
    };
    if dim > 3 || alpha.dim != dim || alpha.degree != 1 {
        return Err(Error::Contract(format!("alpha must be a 1-form on T^{dim} (dim ≤ 3)")));
    }
    if config.n_paths < MIN_PATHS {
        return Err(Error::Contract(format!("at least {MIN_PATHS} paths are required, got {}", config.n_paths)));
    }
    let cfg = crate::stochastic::PathConfig { potential: 0.0, ..config.path };
    cfg.validate()?;
    let q = QEvaluator::new(basis, f, 0.0)?;
    let geometry = basis.model.geometry.clone();
    let rows = exec.map_indexed(config.n_paths, |i| -> Result<Complex64> {
        let mut rng = path_rng(config.seed, i as u64);
        let (y, _) = StartLaw::Haar.sample(&geometry, &mut rng);
        let mut vis = DbIntegral { q: &q, value: [c(0.0, 0.0); 3], dim };
        let end = simulate(&geometry, &cfg, y, &mut rng, &mut vis)?;
        let State::Flat(x) = end.state else { unreachable!("torus state") };
        let a = alpha.eval(&x[..dim]);
        Ok((0..dim).map(|j| a[j].conj() * vis.value[j]).sum())
    });
    let vals: Vec<Complex64> = rows.into_iter().collect::<Result<_>>()?;
    let (mr, sr) = mean_se(&vals.iter().map(|v| v.re).collect::<Vec<_>>());
    let (mi, si) = mean_se(&vals.iter().map(|v| v.im).collect::<Vec<_>>());
    Ok(BilinearEstimate { estimate: [mr, mi], se: [sr, si], n_paths: vals.len(), y0: cfg.y0, dt: cfg.dt, seed: config.seed })
}

/// `2 ∫_0^∞ (y0 ∧ y) ⟨∂_y Q α, d Q f⟩ dy` summed over modes. As `y0 → ∞` it
/// tends to `−½ ⟨d(−Δ)^{−1/2} f, α⟩`.
pub fn bundle_bilinear_oracle(f: &SpectralCoefficients, alpha: &FormField, y0: f64, method: YIntegral) -> Result<Complex64> {
    let df = exterior_derivative(&FormField::from_scalar(f)?)?;
    if alpha.degree != 1 || alpha.dim != df.dim {
        return Err(Error::Contract("alpha must be a 1-form of matching dimension".into()));
    }
    let mut total = c(0.0, 0.0);
    for (k, v) in &df.modes {
        let Some(a) = alpha.modes.get(k) else { continue };
        let s = norm_k(k);
        if s == 0.0 {
            continue;
        }
        // ∂_y Q α carries −|k|; both factors decay like e^{−y|k|}
        let pair: Complex64 = a.iter().zip(v).map(|(x, y)| x.conj() * y).sum();
        total += pair * (-s) * 2.0 * green_weight(y0, 2.0 * s, method)?;
    }
    Ok(total)
}

/// Arbitrary point of a torus model, for pointwise checks.
pub fn torus_point(x: &[f64]) -> Point {
    Point(x.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use crate::geometry::Field;
    use crate::test_support::TestRng;

    fn random_form(rng: &mut TestRng, dim: usize, degree: usize, kmax: i64) -> FormField {
        let mut f = FormField::new(dim, degree).unwrap();
        for _ in 0..6 {
            let k: Vec<i64> = (0..dim).map(|_| rng.uniform(-(kmax as f64), kmax as f64 + 1.0).floor() as i64).collect();
            if k.iter().all(|&v| v == 0) {
                continue;
            }
            let v = (0..f.fiber_dim()).map(|_| c(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))).collect();
            f.insert(k, v).unwrap();
        }
        f
    }

    #[test]
    fn fermion_relations_are_exact() {
        for d in 1..=4 {
            for i in 0..d {
                for j in 0..d {
                    let (ai, aj) = (annihilation(d, i), annihilation(d, j));
                    let (ci, cj) = (creation(d, i), creation(d, j));
                    let zero = CMatrix::zeros(1 << d);
                    assert_eq!(ai.mul(&aj).add(&aj.mul(&ai)), zero);
                    assert_eq!(ci.mul(&cj).add(&cj.mul(&ci)), zero);
                    let want = if i == j { CMatrix::identity(1 << d) } else { zero };
                    assert_eq!(ai.mul(&cj).add(&cj.mul(&ai)), want);
                }
            }
        }
    }

    #[test]
    fn derivative_of_a_plane_wave() {
        let mut f = FormField::new(2, 0).unwrap();
        f.insert(vec![1, 0], vec![c(1.0, 0.0)]).unwrap();
        let df = exterior_derivative(&f).unwrap();
        assert_eq!(df.modes[&vec![1, 0]], vec![c(0.0, 1.0), c(0.0, 0.0)]);
        assert_eq!(form_labels(2, 1), vec!["dx1", "dx2"]);
        assert_eq!(form_labels(3, 2), vec!["dx1^dx2", "dx1^dx3", "dx2^dx3"]);
    }

    #[test]
    fn d_squared_vanishes_exactly() {
        let mut rng = TestRng::new(3);
        for d in 2..=4 {
            for p in 0..d - 1 {
                let f = random_form(&mut rng, d, p, 4);
                let dd = exterior_derivative(&exterior_derivative(&f).unwrap()).unwrap();
                assert!(dd.max_abs() < 1e-13, "d={d} p={p}");
            }
        }
    }

    /// `(dω)_J = Σ_{j ∈ J} (−1)^{pos(j)} i k_j ω_{J∖j}`, written out directly.
    fn brute_d(f: &FormField) -> FormField {
        let (d, p) = (f.dim, f.degree);
        let src = form_basis(d, p);
        let dst = form_basis(d, p + 1);
        let mut out = FormField::new(d, p + 1).unwrap();
        for (k, v) in &f.modes {
            let mut w = vec![c(0.0, 0.0); dst.len()];
            for (slot, &big) in dst.iter().enumerate() {
                let elems: Vec<usize> = (0..d).filter(|i| big & (1 << i) != 0).collect();
                for (pos, &j) in elems.iter().enumerate() {
                    let small = big & !(1 << j);
                    let idx = src.iter().position(|&m| m == small).unwrap();
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    w[slot] += c(0.0, k[j] as f64) * sign * v[idx];
                }
            }
            out.modes.insert(k.clone(), w);
        }
        out
    }

    #[test]
    fn derivative_matches_brute_force_and_riesz_kills_closed_forms() {
        let mut rng = TestRng::new(8);
        for (d, p) in [(2, 0), (2, 1), (3, 1), (3, 2), (4, 2)] {
            let f = random_form(&mut rng, d, p, 3);
            let a = exterior_derivative(&f).unwrap();
            let b = brute_d(&f);
            for (k, v) in &a.modes {
                for (x, y) in v.iter().zip(&b.modes[k]) {
                    assert!((x - y).norm() < 1e-14);
                }
            }
        }
        // an exact 1-form is closed, so its Riesz image vanishes
        let g = random_form(&mut rng, 3, 0, 3);
        let closed = exterior_derivative(&g).unwrap();
        assert!(hodge_riesz(&closed).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn codifferential_is_the_quadrature_adjoint() {
        let model = ModelSpace::with_defaults(Geometry::Torus { dim: 2, k_max: 16 }).unwrap();
        let mut rng = TestRng::new(21);
        let f = random_form(&mut rng, 2, 1, 4);
        let g = random_form(&mut rng, 2, 2, 4);
        // df on the grid from spectral partials of the component functions
        let fg = f.to_grid(&model).unwrap();
        let dx = |comp: &GridFunction, j: usize| model.apply_field_grid(Field::Horizontal(j), comp).unwrap();
        let mut df = dx(&fg[1], 0);
        df.axpy(c(-1.0, 0.0), &dx(&fg[0], 1));
        let gg = g.to_grid(&model).unwrap();
        let lhs = model.inner(&df, &gg[0]);
        let rhs = f.inner(&codifferential(&g).unwrap());
        assert!((lhs - rhs).norm() < 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn hodge_laplacian_is_diagonal() {
        for k in [vec![1, 2], vec![-3, 0, 2], vec![1, 1, 1, 1]] {
            let d = k.len();
            let s = (k.iter().map(|v| v * v).sum::<i64>()) as f64;
            let want = CMatrix::identity(1 << d).scale(c(s, 0.0));
            assert_eq!(hodge_laplacian_symbol(&k), want);
        }
    }

    #[test]
    fn scalar_riesz_is_an_isometry() {
        let mut f = FormField::new(2, 0).unwrap();
        f.insert(vec![3, -4], vec![c(0.6, -0.2)]).unwrap();
        let r = hodge_riesz(&f).unwrap();
        assert!((r.l2_norm() - f.l2_norm()).abs() < 1e-14);
        let mut zero = FormField::new(2, 0).unwrap();
        zero.insert(vec![0, 0], vec![c(1.0, 0.0)]).unwrap();
        assert!(matches!(hodge_riesz(&zero), Err(Error::Contract(_))));
    }

    #[test]
    fn clifford_relations_and_lichnerowicz() {
        for d in [2, 4, 6] {
            let gens = clifford_generators(d).unwrap();
            assert_eq!(gens.len(), d);
            assert_eq!(gens[0].n, 1 << (d / 2));
            assert_eq!(clifford_defect(&gens), 0.0);
            // −𝐃² has symbol −|k|², the flat Laplacian
            let k: Vec<i64> = (0..d as i64).map(|i| i - 1).collect();
            let s = dirac_symbol(&gens, &k);
            let n2 = k.iter().map(|v| v * v).sum::<i64>() as f64;
            assert_eq!(s.mul(&s).scale(c(-1.0, 0.0)), CMatrix::identity(gens[0].n).scale(c(-n2, 0.0)));
        }
        assert!(clifford_generators(3).is_err());
    }

    #[test]
    fn dirac_riesz_is_unitary_per_mode() {
        let mut psi = SpinorField::new(2).unwrap();
        psi.insert(vec![2, -1], vec![c(0.3, 0.1), c(-0.7, 0.4)]).unwrap();
        let out = dirac_riesz(&psi).unwrap();
        assert!((out.l2_norm() - psi.l2_norm()).abs() < 1e-12);
        let twice = dirac_riesz(&out).unwrap();
        for (a, b) in twice.modes[&vec![2, -1]].iter().zip(&psi.modes[&vec![2, -1]]) {
            assert!((a - b).norm() < 1e-12);
        }
        let d = dirac(&psi).unwrap();
        assert!((d.l2_norm() - 5.0f64.sqrt() * psi.l2_norm()).abs() < 1e-12);
    }

    fn circle_data() -> (Geometry, SpectralCoefficients, FormField) {
        let g = Geometry::torus(1);
        let f = SpectralCoefficients::from_pairs(g.clone(), &[(ModeIndex::Torus(vec![1]), c(0.5, 0.0)), (ModeIndex::Torus(vec![-1]), c(0.5, 0.0))]).unwrap();
        // α = sin x dx
        let mut alpha = FormField::new(1, 1).unwrap();
        alpha.insert(vec![1], vec![c(0.0, -0.5)]).unwrap();
        alpha.insert(vec![-1], vec![c(0.0, 0.5)]).unwrap();
        (g, f, alpha)
    }

    #[test]
    fn bundle_oracle_limit_is_minus_half_the_pairing() {
        let (_, f, alpha) = circle_data();
        let r = hodge_riesz(&FormField::from_scalar(&f).unwrap()).unwrap();
        let pairing = alpha.inner(&r).conj();
        // d(−Δ)^{−1/2} cos = −sin dx, so ⟨·, α⟩ = −½ and the limit is ¼
        assert!((pairing - c(-0.5, 0.0)).norm() < 1e-14);
        let big = bundle_bilinear_oracle(&f, &alpha, 80.0, YIntegral::ClosedForm).unwrap();
        assert!((big - c(0.25, 0.0)).norm() < 1e-12);
        let q = bundle_bilinear_oracle(&f, &alpha, 1.0, YIntegral::Quadrature).unwrap();
        let cf = bundle_bilinear_oracle(&f, &alpha, 1.0, YIntegral::ClosedForm).unwrap();
        assert!((q - cf).norm() < 1e-12);
        assert!((cf.re - 0.25 * (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn bundle_monte_carlo_matches_oracle() {
        let (g, f, alpha) = circle_data();
        let model = ModelSpace::with_defaults(g.clone()).unwrap();
        let basis = Basis::new(&model);
        let cfg = MCConfig::new(&g, 4000, 1.0, 1e-3, 12);
        let est = gv_bundle_bilinear(&Serial, &basis, &BundleSpec::flat(), &f, &alpha, &cfg).unwrap();
        let oracle = bundle_bilinear_oracle(&f, &alpha, 1.0, YIntegral::ClosedForm).unwrap();
        assert!(est.z_score(oracle) < 3.0, "{est:?} vs {oracle}");
        let zero = gv_bundle_bilinear(&Serial, &basis, &BundleSpec::flat(), &SpectralCoefficients::new(g.clone()), &alpha, &cfg).unwrap();
        assert_eq!(zero.estimate, [0.0, 0.0]);
        let curved = BundleSpec { curvature: 1.0 };
        assert!(matches!(gv_bundle_bilinear(&Serial, &basis, &curved, &f, &alpha, &cfg), Err(Error::Contract(_))));
    }
}
