//! `L^p` norms by quadrature, the bound constants of the transform
//! inequalities, and deterministic pass/fail suites over seeded probe
//! functions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{dirac_riesz, hodge_riesz, FormField, SpinorField};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, ModelSpace};
use crate::grid::GridFunction;
use crate::hermitian::CMatrix;
use crate::quad::{integrate_to_infinity, Tolerance};
use crate::spectral::{synthesize_grid, Basis, LadderTable, ModeIndex, SpectralCoefficients};
use crate::transforms::{commutator_w_sqrtl, t_a_apply, TransformSpec, YIntegral};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("p must lie in (1, ∞), got {p}")))
    }
}

/// `(∫|f|^p dμ)^{1/p}` with the model's quadrature.
pub fn lp_norm(model: &ModelSpace, f: &GridFunction, p: f64) -> Result<f64> {
    check_p(p)?;
    if f.len() != model.grid.len() {
        return Err(Error::Contract(format!("grid function has {} values, model has {}", f.len(), model.grid.len())));
    }
    let vals: Vec<f64> = f.values.iter().map(|v| v.norm().powf(p)).collect();
    Ok(model.integrate_real(&vals).powf(1.0 / p))
}

/// `L^p` norm of a section given by its fiber components, with the
/// pointwise Hermitian fiber norm.
pub fn lp_norm_fiber(model: &ModelSpace, components: &[GridFunction], p: f64) -> Result<f64> {
    check_p(p)?;
    let n = model.grid.len();
    if components.iter().any(|g| g.len() != n) {
        return Err(Error::Contract("fiber components must live on the model grid".into()));
    }
    let vals: Vec<f64> = (0..n)
        .map(|i| components.iter().map(|g| g.values[i].norm_sqr()).sum::<f64>().sqrt().powf(p))
        .collect();
    Ok(model.integrate_real(&vals).powf(1.0 / p))
}

/// `p* = max(p, p/(p−1))`.
pub fn p_star(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `(3/2)(p*−1)‖A‖`, any constant potential `V ≤ 0`.
    Schrodinger,
    /// `½cot(π/2p*)‖A‖`, `V = 0` and `A` orthogonal.
    Orthogonal,
    /// `√2(p*−1)`, commutator against `‖Zf‖_p`.
    HeisenbergProp,
    /// `2√2(p*−1)`, commutator against `‖(iZ+1)f‖_p`.
    Su2Prop,
    /// `6C(p*−1)` for bundle Riesz transforms.
    Bundle,
}

/// The bound constant for `p`; `aux` is `‖A‖` for the transform kinds and
/// the domination constant `C` for bundles, ignored otherwise.
pub fn bound_constant(kind: BoundKind, p: f64, aux: f64) -> Result<f64> {
    check_p(p)?;
    let ps = p_star(p);
    Ok(match kind {
        BoundKind::Schrodinger => 1.5 * (ps - 1.0) * aux,
        BoundKind::Orthogonal => 0.5 * aux / (PI / (2.0 * ps)).tan(),
        BoundKind::HeisenbergProp => 2f64.sqrt() * (ps - 1.0),
        BoundKind::Su2Prop => 2.0 * 2f64.sqrt() * (ps - 1.0),
        BoundKind::Bundle => 6.0 * aux * (ps - 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSuite {
    /// `T_A` on `T¹` with `V = 0` and the orthogonal Riesz matrix.
    TorusOrthogonal,
    /// `T_A` on `T¹` with `V = −1`, the Riesz matrix and a general complex one.
    TorusSchrodinger,
    HeisenbergCommutator,
    Su2Commutator,
    /// Hodge Riesz transforms of 0- and 1-forms and the Dirac Riesz transform
    /// of spinors on the flat `T²` (`C = 1`).
    FlatBundle,
}

impl BoundSuite {
    pub const ALL: [BoundSuite; 5] = [
        BoundSuite::TorusOrthogonal,
        BoundSuite::TorusSchrodinger,
        BoundSuite::HeisenbergCommutator,
        BoundSuite::Su2Commutator,
        BoundSuite::FlatBundle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundSuite::TorusOrthogonal => "torus_orthogonal",
            BoundSuite::TorusSchrodinger => "torus_schrodinger",
            BoundSuite::HeisenbergCommutator => "heisenberg_commutator",
            BoundSuite::Su2Commutator => "su2_commutator",
            BoundSuite::FlatBundle => "flat_bundle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn kind(self) -> BoundKind {
        match self {
            BoundSuite::TorusOrthogonal => BoundKind::Orthogonal,
            BoundSuite::TorusSchrodinger => BoundKind::Schrodinger,
            BoundSuite::HeisenbergCommutator => BoundKind::HeisenbergProp,
            BoundSuite::Su2Commutator => BoundKind::Su2Prop,
            BoundSuite::FlatBundle => BoundKind::Bundle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub ps: Vec<f64>,
    /// Random probes per operator, on top of the canonical ones.
    pub n_random: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { ps: vec![1.5, 2.0, 3.0, 4.0], n_random: 20, seed: 2024, tol: 1e-6 }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ps.is_empty() {
            return Err(Error::Contract("ps must not be empty".into()));
        }
        for &p in &self.ps {
            check_p(p)?;
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Contract(format!("tol must be finite and >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub geometry: String,
    pub operator: String,
    pub p: f64,
    pub test_function: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    /// Upper bounds on the `L^p` mass of lhs and rhs outside the truncated
    /// Heisenberg box; absent on compact models.
    pub tail: Option<[f64; 2]>,
}

/// Largest observed `ratio / bound` for one operator and `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub operator: String,
    pub p: f64,
    pub max_ratio: f64,
    pub bound: f64,
    pub test_function: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub suites: Vec<BoundSuite>,
    pub config: SuiteConfig,
    pub entries: Vec<NormEntry>,
    pub worst: Vec<WorstCase>,
}

impl NormReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &NormEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// A probe as `(label, lhs, rhs, tail)` with lhs/rhs still to be normed.
enum Sides {
    Scalar(GridFunction, GridFunction),
    Fiber(Vec<GridFunction>, Vec<GridFunction>),
}

struct Probe {
    label: String,
    operator: &'static str,
    aux: f64,
    sides: Sides,
    tail: Option<TailData>,
}

fn push_entries(model: &ModelSpace, probe: &Probe, kind: BoundKind, cfg: &SuiteConfig, out: &mut Vec<NormEntry>) -> Result<()> {
    for &p in &cfg.ps {
        let (lhs, rhs) = match &probe.sides {
            Sides::Scalar(l, r) => (lp_norm(model, l, p)?, lp_norm(model, r, p)?),
            Sides::Fiber(l, r) => (lp_norm_fiber(model, l, p)?, lp_norm_fiber(model, r, p)?),
        };
        // both sides vanish on kernel modes; that is a trivially satisfied bound
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
        let bound = bound_constant(kind, p, probe.aux)?;
        out.push(NormEntry {
            geometry: String::from(model.geometry.name()),
            operator: String::from(probe.operator),
            p,
            test_function: probe.label.clone(),
            lhs,
            rhs,
            ratio,
            bound,
            margin: bound - ratio,
            pass: ratio <= bound * (1.0 + cfg.tol),
            tail: match &probe.tail {
                Some(t) => Some([t.lhs_bound(p)?, t.rhs_bound(p)?]),
                None => None,
            },
        });
    }
    Ok(())
}

fn random_coeffs(rng: &mut ChaCha8Rng, geometry: &Geometry, band: &[ModeIndex]) -> Result<SpectralCoefficients> {
    let mut co = SpectralCoefficients::new(geometry.clone());
    let terms = rng.gen_range(2..=5);
    for _ in 0..terms {
        let m = band[rng.gen_range(0..band.len())].clone();
        co.add_to(m, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))?;
    }
    Ok(co)
}

fn torus_band(dim: usize, k_max: i64) -> Vec<ModeIndex> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out.into_iter().flat_map(|v: Vec<i64>| (-k_max..=k_max).map(move |k| [v.clone(), vec![k]].concat())).collect();
    }
    out.into_iter().filter(|k| k.iter().any(|&x| x != 0)).map(ModeIndex::Torus).collect()
}

/// A non-orthogonal complex `2×2` transform matrix for the potential suite.
fn general_matrix() -> CMatrix {
    CMatrix::from_rows(&[&[c(0.0, 0.0), c(-0.8, 0.3)], &[c(0.6, -0.2), c(0.25, 0.1)]])
}

fn torus_suite(suite: BoundSuite, cfg: &SuiteConfig, rng: &mut ChaCha8Rng, out: &mut Vec<NormEntry>) -> Result<()> {
    let geometry = Geometry::torus(1);
    let model = ModelSpace::with_defaults(geometry.clone())?;
    let basis = Basis::new(&model);
    let table = LadderTable::new(1e-5);
    let specs: Vec<(&'static str, TransformSpec)> = match suite {
        BoundSuite::TorusOrthogonal => vec![("riesz_t1", TransformSpec::riesz_axis(1, 0)?)],
        _ => vec![
            ("riesz_t1_potential", TransformSpec::riesz_axis(1, 0)?.with_potential(-1.0)?),
            ("general_matrix_potential", TransformSpec::new(general_matrix(), -1.0)?),
        ],
    };
    let band = torus_band(1, 8);
    let cos = SpectralCoefficients::from_pairs(geometry.clone(), &[(ModeIndex::Torus(vec![1]), c(0.5, 0.0)), (ModeIndex::Torus(vec![-1]), c(0.5, 0.0))])?;
    let mut probes = vec![(String::from("cos_x"), cos)];
    for i in 0..cfg.n_random {
        probes.push((format!("random_{i:02}"), random_coeffs(rng, &geometry, &band)?));
    }
    for (name, spec) in &specs {
        if suite == BoundSuite::TorusOrthogonal && !spec.is_orthogonal() {
            return Err(Error::Contract(format!("{name} is not orthogonal")));
        }
        for (label, f) in &probes {
            let tf = t_a_apply(&basis, &table, spec, f, YIntegral::ClosedForm)?.to_grid(&basis)?;
            let probe = Probe {
                label: label.clone(),
                operator: name,
                aux: spec.norm(),
                sides: Sides::Scalar(tf, synthesize_grid(&basis, f)?),
                tail: None,
            };
            push_entries(&model, &probe, suite.kind(), cfg, out)?;
        }
    }
    Ok(())
}

/// Per-mode pieces of the Heisenberg tail bound: `(weight, λ, k)` for the
/// rhs `Zf` and the lhs commutator image.
struct TailData {
    rhs: Vec<(f64, i64, u32)>,
    lhs: Vec<(f64, i64, u32)>,
    radius: f64,
}

/// `E_k(x) = Σ_j C(k,j) x^j / j!` dominates `|L_k(x)|` on `x ≥ 0`; returns
/// `(E_k(x), E_k'(x))`.
fn laguerre_envelope(k: u32, x: f64) -> (f64, f64) {
    let (mut e, mut de) = (0.0, 0.0);
    let mut binom = 1.0;
    let mut term = 1.0; // x^j / j!
    let mut prev = 0.0; // x^{j−1} / (j−1)!
    for j in 0..=k {
        e += binom * term;
        de += binom * prev;
        binom *= (k - j) as f64 / (j + 1) as f64;
        prev = term;
        term *= x / (j + 1) as f64;
    }
    (e, de)
}

impl TailData {
    /// `(4π² ∫_R^∞ env(r)^p r dr)^{1/p}` summed over modes (Minkowski).
    fn bound(&self, pieces: &[(f64, i64, u32)], p: f64, image: bool) -> Result<f64> {
        let tol = Tolerance { abs: 1e-300, rel: 1e-8, max_intervals: 2000 };
        let mut total = 0.0;
        for &(w, lambda, k) in pieces {
            let l = lambda.unsigned_abs() as f64;
            let env = |r: f64| {
                let x = 0.5 * l * r * r;
                let (e, de) = laguerre_envelope(k, x);
                // |WΦ| ≤ |λ| r (E' + E) e^{−x/2} for radial Φ(r) e^{−iλz}
                let v = if image { l * r * (de + e) } else { e };
                v * (-0.5 * x).exp()
            };
            let (mass, _) = integrate_to_infinity(|r| env(r).powf(p) * r, self.radius, tol)?;
            total += w * (4.0 * PI * PI * mass).powf(1.0 / p);
        }
        Ok(total)
    }

    fn lhs_bound(&self, p: f64) -> Result<f64> {
        self.bound(&self.lhs, p, true)
    }

    fn rhs_bound(&self, p: f64) -> Result<f64> {
        self.bound(&self.rhs, p, false)
    }
}

fn commutator_suite(suite: BoundSuite, cfg: &SuiteConfig, rng: &mut ChaCha8Rng, out: &mut Vec<NormEntry>) -> Result<()> {
    let heis = suite == BoundSuite::HeisenbergCommutator;
    let geometry = if heis { Geometry::heisenberg() } else { Geometry::su2() };
    let model = ModelSpace::with_defaults(geometry.clone())?;
    let basis = Basis::new(&model);
    let table = LadderTable::new(1e-5);
    let (band, canonical): (Vec<ModeIndex>, Vec<ModeIndex>) = if heis {
        let band = (-3..=3i64).filter(|&l| l != 0).flat_map(|lambda| (0..=3u32).map(move |k| ModeIndex::Heisenberg { lambda, k })).collect();
        (band, vec![ModeIndex::Heisenberg { lambda: -1, k: 0 }, ModeIndex::Heisenberg { lambda: 1, k: 1 }, ModeIndex::Heisenberg { lambda: 2, k: 2 }])
    } else {
        let band = (-3..=3i64).flat_map(|n| (0..=3u32).map(move |k| ModeIndex::Su2 { n, k })).filter(|m| !m.is_zero_mode()).collect();
        (band, vec![ModeIndex::Su2 { n: 2, k: 0 }, ModeIndex::Su2 { n: -3, k: 2 }, ModeIndex::Su2 { n: 0, k: 1 }])
    };
    let mut probes: Vec<(String, SpectralCoefficients)> = Vec::new();
    for m in &canonical {
        probes.push((format!("mode_{}", m.label()), SpectralCoefficients::from_pairs(geometry.clone(), &[(m.clone(), c(1.0, 0.0))])?));
    }
    for i in 0..cfg.n_random {
        probes.push((format!("random_{i:02}"), random_coeffs(rng, &geometry, &band)?));
    }
    let operator = if heis { "heisenberg_commutator" } else { "su2_commutator" };
    for (label, f) in probes {
        let lhs = commutator_w_sqrtl(&basis, &table, &f)?;
        let mut rhs_co = SpectralCoefficients::new(geometry.clone());
        for (m, v) in f.iter() {
            let z = table.entry(&basis, m)?.z_eigenvalue;
            let factor = if heis { z } else { c(0.0, 1.0) * z + 1.0 };
            rhs_co.insert(m.clone(), v * factor)?;
        }
        let rhs = synthesize_grid(&basis, &rhs_co)?;
        let tail = match geometry {
            Geometry::Heisenberg { radius, .. } => {
                let mut t = TailData { rhs: Vec::new(), lhs: Vec::new(), radius };
                for (m, v) in f.iter() {
                    let ModeIndex::Heisenberg { lambda, k } = *m else { unreachable!("heisenberg mode") };
                    let w = v.norm() / basis.norm(m)?;
                    t.rhs.push((w * lambda.unsigned_abs() as f64, lambda, k));
                    let e = table.entry(&basis, m)?;
                    if !e.up.annihilated {
                        let gap = (m.eigenvalue().sqrt() - e.up.eigenvalue.max(0.0).sqrt()).abs();
                        t.lhs.push((w * gap, lambda, k));
                    }
                }
                Some(t)
            }
            _ => None,
        };
        let probe = Probe { label, operator, aux: 1.0, sides: Sides::Scalar(lhs, rhs), tail };
        push_entries(&model, &probe, suite.kind(), cfg, out)?;
    }
    Ok(())
}

fn random_form(rng: &mut ChaCha8Rng, dim: usize, degree: usize, k_max: i64) -> Result<FormField> {
    let mut f = FormField::new(dim, degree)?;
    let terms = rng.gen_range(2..=5);
    for _ in 0..terms {
        let k: Vec<i64> = (0..dim).map(|_| rng.gen_range(-k_max..=k_max)).collect();
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let v = (0..f.fiber_dim()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        f.insert(k, v)?;
    }
    Ok(f)
}

fn random_spinor(rng: &mut ChaCha8Rng, dim: usize, k_max: i64) -> Result<SpinorField> {
    let mut s = SpinorField::new(dim)?;
    let terms = rng.gen_range(2..=5);
    for _ in 0..terms {
        let k: Vec<i64> = (0..dim).map(|_| rng.gen_range(-k_max..=k_max)).collect();
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let v = (0..s.fiber_dim()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        s.insert(k, v)?;
    }
    Ok(s)
}

fn bundle_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng, out: &mut Vec<NormEntry>) -> Result<()> {
    let model = ModelSpace::with_defaults(Geometry::Torus { dim: 2, k_max: 8 })?;
    let kind = BoundKind::Bundle;
    let mut cos = FormField::new(2, 0)?;
    cos.insert(vec![1, 0], vec![c(0.5, 0.0)])?;
    cos.insert(vec![-1, 0], vec![c(0.5, 0.0)])?;
    let mut forms = vec![("zero_form", String::from("cos_x"), cos)];
    for degree in [0, 1] {
        for i in 0..cfg.n_random {
            let op = if degree == 0 { "zero_form" } else { "one_form" };
            forms.push((op, format!("random_{i:02}"), random_form(rng, 2, degree, 4)?));
        }
    }
    for (op, label, f) in forms {
        let r = hodge_riesz(&f)?;
        let operator = if op == "zero_form" { "hodge_riesz_0" } else { "hodge_riesz_1" };
        let probe = Probe { label, operator, aux: 1.0, sides: Sides::Fiber(r.to_grid(&model)?, f.to_grid(&model)?), tail: None };
        push_entries(&model, &probe, kind, cfg, out)?;
    }
    for i in 0..cfg.n_random {
        let psi = random_spinor(rng, 2, 4)?;
        let r = dirac_riesz(&psi)?;
        let probe = Probe {
            label: format!("random_{i:02}"),
            operator: "dirac_riesz",
            aux: 1.0,
            sides: Sides::Fiber(r.to_grid(&model)?, psi.to_grid(&model)?),
            tail: None,
        };
        push_entries(&model, &probe, kind, cfg, out)?;
    }
    Ok(())
}

/// Runs the selected suites. Each suite draws its probes from its own
/// stream derived from `cfg.seed`, so the entries of one suite do not depend
/// on which others run.
pub fn verify_bounds(suites: &[BoundSuite], cfg: &SuiteConfig) -> Result<NormReport> {
    cfg.validate()?;
    let mut entries = Vec::new();
    for &suite in suites {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(suite as u64);
        match suite {
            BoundSuite::TorusOrthogonal | BoundSuite::TorusSchrodinger => torus_suite(suite, cfg, &mut rng, &mut entries)?,
            BoundSuite::HeisenbergCommutator | BoundSuite::Su2Commutator => commutator_suite(suite, cfg, &mut rng, &mut entries)?,
            BoundSuite::FlatBundle => bundle_suite(cfg, &mut rng, &mut entries)?,
        }
    }
    let mut worst: Vec<WorstCase> = Vec::new();
    for e in &entries {
        let rel = e.ratio / e.bound;
        match worst.iter_mut().find(|w| w.operator == e.operator && w.p == e.p) {
            Some(w) if rel <= w.max_ratio / w.bound => {}
            Some(w) => {
                w.max_ratio = e.ratio;
                w.bound = e.bound;
                w.test_function = e.test_function.clone();
            }
            None => worst.push(WorstCase { operator: e.operator.clone(), p: e.p, max_ratio: e.ratio, bound: e.bound, test_function: e.test_function.clone() }),
        }
    }
    Ok(NormReport { suites: suites.to_vec(), config: cfg.clone(), entries, worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    #[test]
    fn constant_and_cosine_norms() {
        let model = ModelSpace::with_defaults(Geometry::torus(1)).unwrap();
        let one = model.tabulate(|_| c(1.0, 0.0));
        for p in [1.5, 2.0, 3.7] {
            assert!((lp_norm(&model, &one, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let cos = model.tabulate(|x| c(x.0[0].cos(), 0.0));
        assert!((lp_norm(&model, &cos, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        // ∫|cos|⁴ = 3/8 on the normalized circle
        assert!((lp_norm(&model, &cos, 4.0).unwrap() - 0.375f64.powf(0.25)).abs() < 1e-14);
        assert!(lp_norm(&model, &cos, 1.0).is_err());
    }

    #[test]
    fn heisenberg_mode_norm_matches_laguerre_normalization() {
        let model = ModelSpace::with_defaults(Geometry::heisenberg()).unwrap();
        for (lambda, k) in [(1, 0), (-2, 3), (3, 1)] {
            let m = ModeIndex::Heisenberg { lambda, k };
            let g = crate::spectral::eigenfunction_grid(&model, &m).unwrap();
            let oracle = 2.0 * PI / (lambda.unsigned_abs() as f64).sqrt();
            assert!((lp_norm(&model, &g, 2.0).unwrap() - oracle).abs() < 1e-8 * oracle);
        }
    }

    #[test]
    fn bound_constant_examples() {
        assert!((bound_constant(BoundKind::Orthogonal, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((bound_constant(BoundKind::Schrodinger, 2.0, 1.0).unwrap() - 1.5).abs() < 1e-15);
        let want = 0.5 * (1.0 + 2f64.sqrt());
        assert!((bound_constant(BoundKind::Orthogonal, 4.0, 1.0).unwrap() - want).abs() < 1e-14);
        assert!(bound_constant(BoundKind::Bundle, 1.0, 1.0).is_err());
    }

    const KINDS: [BoundKind; 5] = [BoundKind::Schrodinger, BoundKind::Orthogonal, BoundKind::HeisenbergProp, BoundKind::Su2Prop, BoundKind::Bundle];

    proptest! {
        #[test]
        fn conjugate_exponents_share_constants(p in 1.01f64..20.0, aux in 0.1f64..5.0, kind in 0usize..5) {
            let q = p / (p - 1.0);
            let a = bound_constant(KINDS[kind], p, aux).unwrap();
            let b = bound_constant(KINDS[kind], q, aux).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn lp_norm_is_homogeneous_and_monotone(s in 0.01f64..10.0, p in 1.1f64..6.0, seed in 0u64..1000) {
            let model = ModelSpace::with_defaults(Geometry::torus(1)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = GridFunction::from_values((0..model.grid.len()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
            let n = lp_norm(&model, &f, p).unwrap();
            let scaled = lp_norm(&model, &f.scaled(c(0.0, s)), p).unwrap();
            prop_assert!((scaled - s * n).abs() <= 1e-12 * s * n);
            // shrinking every |f(x)| cannot increase the norm
            let smaller = GridFunction::from_values(f.values.iter().map(|v| v * (0.5 + 0.5 * (v.re * 7.0).sin().abs())).collect());
            prop_assert!(lp_norm(&model, &smaller, p).unwrap() <= n * (1.0 + 1e-14));
        }
    }

    #[test]
    fn cosine_attains_the_orthogonal_bound_in_l2() {
        let cfg = SuiteConfig { ps: vec![2.0], n_random: 0, ..SuiteConfig::default() };
        let r = verify_bounds(&[BoundSuite::TorusOrthogonal], &cfg).unwrap();
        let e = r.entries.iter().find(|e| e.test_function == "cos_x").unwrap();
        assert!((e.ratio - 0.5).abs() < 1e-12, "{}", e.ratio);
        assert!(e.pass);
    }

    #[test]
    fn envelope_dominates_laguerre() {
        use crate::special::{laguerre, laguerre_derivative};
        for k in 0..=8 {
            for i in 0..200 {
                let x = i as f64 * 0.37;
                let (e, de) = laguerre_envelope(k, x);
                assert!(laguerre(k, 0.0, x).abs() <= e * (1.0 + 1e-12));
                assert!(laguerre_derivative(k, 0.0, x).abs() <= de * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn default_suites_pass() {
        let cfg = SuiteConfig { n_random: 4, ..SuiteConfig::default() };
        let r = verify_bounds(&BoundSuite::ALL, &cfg).unwrap();
        for e in r.failures() {
            panic!("{} {} p={} ratio {} > {}", e.operator, e.test_function, e.p, e.ratio, e.bound);
        }
        let heis: Vec<_> = r.entries.iter().filter(|e| e.geometry == "heisenberg").collect();
        assert!(!heis.is_empty());
        for e in heis {
            let [tl, tr] = e.tail.unwrap();
            assert!(tl < 1e-3 * e.lhs.max(1e-300) && tr < 1e-3 * e.rhs, "{e:?}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = SuiteConfig { n_random: 3, ps: vec![3.0], ..SuiteConfig::default() };
        let a = verify_bounds(&[BoundSuite::TorusSchrodinger, BoundSuite::FlatBundle], &cfg).unwrap();
        let b = verify_bounds(&[BoundSuite::FlatBundle], &cfg).unwrap();
        let tail: Vec<_> = a.entries.iter().filter(|e| e.geometry == "torus" && e.operator.starts_with("hodge") || e.operator == "dirac_riesz").cloned().collect();
        assert_eq!(tail, b.entries);
    }
}
