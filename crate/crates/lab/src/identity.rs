//! Deterministic identity suite: the operator identities that hold exactly
//! on each model, checked to quadrature accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riesz_lab_core::geometry::{Geometry, ModelSpace};
use riesz_lab_core::grid::GridFunction;
use riesz_lab_core::hermitian::CMatrix;
use riesz_lab_core::spectral::{modes, Basis, LadderTable, ModeIndex, SpectralCoefficients};
use riesz_lab_core::transforms::{
    adjoint_check, commutator_w_sqrtl, identity_discrepancy, pieces_from_coeffs, rhs_identity_apply, riesz_apply,
    t_a_apply, EigenPiece, Probe, TransformSpec, YIntegral,
};
use riesz_lab_core::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};

/// Names accepted by `--suite` for `identity-check`.
pub const CHECKS: &[&str] = &["riesz_identity", "closed_vs_quadrature", "adjoint", "commutator_identity", "ladder_residual"];

/// Certificate tolerance for ladder images.
pub const LADDER_TOL: f64 = 1e-5;

/// Potentials exercised by the closed-form/quadrature comparison.
const POTENTIALS: [f64; 3] = [0.0, -1.0, -3.0];

/// Relative-gap floor below which both sides count as zero.
const FLOOR: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Identifier of the identity being checked.
    pub claim: String,
    pub residual: f64,
    pub tol: f64,
    pub probes: usize,
    /// Probe attaining `residual`.
    pub worst_probe: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub geometry: String,
    pub checks: Vec<CheckResult>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone)]
pub struct IdentityOptions {
    /// One of [`CHECKS`], or `None` for every check that applies.
    pub only: Option<String>,
    /// Replaces every built-in tolerance.
    pub tol: Option<f64>,
    pub n_random: usize,
    pub seed: u64,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self { only: None, tol: None, n_random: 20, seed: 2024 }
    }
}

/// Worst residual over a probe family.
struct Worst {
    residual: f64,
    probe: String,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Self { residual: 0.0, probe: String::new(), count: 0 }
    }

    fn push(&mut self, r: f64, probe: impl Into<String>) {
        self.count += 1;
        // NaN counts as worst
        if !(r <= self.residual) {
            self.residual = r;
            self.probe = probe.into();
        }
    }

    fn finish(self, name: &str, claim: &str, tol: f64) -> CheckResult {
        CheckResult {
            name: name.into(),
            claim: claim.into(),
            residual: self.residual,
            tol,
            probes: self.count,
            worst_probe: self.probe,
            pass: self.residual < tol,
        }
    }
}

fn nonzero_modes(geometry: &Geometry) -> Vec<ModeIndex> {
    modes(geometry).into_iter().filter(|m| !m.is_zero_mode()).collect()
}

/// Six random unit-box coefficients on random modes of `band`.
fn random_combo(rng: &mut ChaCha8Rng, geometry: &Geometry, band: &[ModeIndex]) -> Result<SpectralCoefficients> {
    let mut co = SpectralCoefficients::new(geometry.clone());
    for _ in 0..6 {
        let m = &band[rng.gen_range(0..band.len())];
        co.add_to(m.clone(), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))?;
    }
    Ok(co)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
    }
    m
}

fn cosine(geometry: &Geometry, dim: usize) -> Result<SpectralCoefficients> {
    let e = |s: i64| ModeIndex::Torus((0..dim).map(|i| if i == 0 { s } else { 0 }).collect());
    SpectralCoefficients::from_pairs(geometry.clone(), &[(e(1), c(0.5, 0.0)), (e(-1), c(0.5, 0.0))])
}

fn coeff_gap(a: &SpectralCoefficients, b: &SpectralCoefficients) -> Result<f64> {
    let mut d = a.clone();
    for (m, v) in b.iter() {
        d.add_to(m.clone(), -v)?;
    }
    let scale = a.l2_norm().max(b.l2_norm());
    Ok(if scale < FLOOR { d.l2_norm() } else { d.l2_norm() / scale })
}

fn coeffs_of(t: riesz_lab_core::transforms::Transformed) -> SpectralCoefficients {
    t.coefficients().cloned().expect("torus transforms return coefficients")
}

/// Probe library: the cosine on the torus, then `n_random` seeded
/// combinations.
fn probes(geometry: &Geometry, opts: &IdentityOptions, rng: &mut ChaCha8Rng) -> Result<Vec<(String, SpectralCoefficients)>> {
    let band = nonzero_modes(geometry);
    let mut out = Vec::new();
    if let Geometry::Torus { dim, .. } = geometry {
        out.push(("cos_x".to_string(), cosine(geometry, *dim)?));
    }
    for i in 0..opts.n_random {
        out.push((format!("random_{i:02}"), random_combo(rng, geometry, &band)?));
    }
    Ok(out)
}

fn wanted(opts: &IdentityOptions, name: &str) -> bool {
    opts.only.as_deref().map_or(true, |o| o == "all" || o == name)
}

fn tol(opts: &IdentityOptions, default: f64) -> f64 {
    opts.tol.unwrap_or(default)
}

/// Runs every check that applies to `geometry`.
pub fn run_identity_suite(geometry: &Geometry, opts: &IdentityOptions) -> Result<IdentityReport> {
    if let Some(o) = &opts.only {
        if o != "all" && !CHECKS.contains(&o.as_str()) {
            return Err(Error::Contract(format!("unknown identity check {o:?}")));
        }
    }
    let model = ModelSpace::with_defaults(geometry.clone())?;
    let basis = Basis::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes = probes(geometry, opts, &mut rng)?;
    let checks = match geometry {
        Geometry::Torus { dim, .. } => torus_checks(&basis, *dim, &probes, opts, &mut rng)?,
        _ => vertical_checks(&basis, &probes, opts)?,
    };
    Ok(IdentityReport { geometry: geometry.name().into(), checks })
}

fn torus_checks(
    basis: &Basis,
    dim: usize,
    probes: &[(String, SpectralCoefficients)],
    opts: &IdentityOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CheckResult>> {
    let table = LadderTable::new(LADDER_TOL);
    let mut out = Vec::new();
    if wanted(opts, "riesz_identity") {
        // T_i f = ½ X_i (−L)^{−1/2} f
        let mut w = Worst::new();
        for axis in 0..dim {
            let spec = TransformSpec::riesz_axis(dim, axis)?;
            for (name, f) in probes {
                let t = coeffs_of(t_a_apply(basis, &table, &spec, f, YIntegral::ClosedForm)?);
                let half = riesz_apply(f, axis)?.scale(c(0.5, 0.0));
                let mut d = t.clone();
                for (m, v) in half.iter() {
                    d.add_to(m.clone(), -v)?;
                }
                w.push(d.l2_norm(), format!("{name} axis {axis}"));
            }
        }
        out.push(w.finish("riesz_identity", "torus.t_i_equals_half_riesz", tol(opts, 1e-10)));
    }
    if wanted(opts, "closed_vs_quadrature") {
        let mut w = Worst::new();
        let general = TransformSpec::new(random_matrix(rng, dim + 1), 0.0)?;
        let specs = [("riesz", TransformSpec::riesz_axis(dim, 0)?), ("general", general)];
        for (sname, spec) in &specs {
            for v in POTENTIALS {
                let spec = spec.clone().with_potential(v)?;
                for (name, f) in probes {
                    let a = coeffs_of(t_a_apply(basis, &table, &spec, f, YIntegral::ClosedForm)?);
                    let b = coeffs_of(t_a_apply(basis, &table, &spec, f, YIntegral::Quadrature)?);
                    w.push(coeff_gap(&a, &b)?, format!("{sname} V={v} {name}"));
                }
            }
        }
        out.push(w.finish("closed_vs_quadrature", "transform.closed_form_equals_quadrature", tol(opts, 1e-8)));
    }
    if wanted(opts, "adjoint") {
        let mut w = Worst::new();
        for (i, pair) in probes.windows(2).enumerate() {
            let spec = TransformSpec::new(random_matrix(rng, dim + 1), -0.7)?;
            let (f, g) = (&pair[0].1, &pair[1].1);
            let r = adjoint_check(basis, &table, &spec, &Probe::Coeffs(f.clone()), &Probe::Coeffs(g.clone()), YIntegral::ClosedForm)?;
            w.push(r / (f.l2_norm() * g.l2_norm()).max(FLOOR), format!("pair {i}"));
        }
        out.push(w.finish("adjoint", "transform.adjoint_duality", tol(opts, 1e-10)));
    }
    Ok(out)
}

fn sum_pieces(len: usize, ps: &[EigenPiece]) -> GridFunction {
    let mut s = GridFunction::zeros(len);
    for p in ps {
        s.axpy(c(1.0, 0.0), &p.function);
    }
    s
}

fn vertical_checks(
    basis: &Basis,
    probes: &[(String, SpectralCoefficients)],
    opts: &IdentityOptions,
) -> Result<Vec<CheckResult>> {
    let model = basis.model;
    let geometry = &model.geometry;
    let all = nonzero_modes(geometry);
    let table = LadderTable::new(LADDER_TOL);
    let (name, claim) = match geometry {
        Geometry::Heisenberg { .. } => ("heisenberg", "heisenberg.commutator_w_sqrt_l_equals_2i_t_z"),
        _ => ("su2", "su2.commutator_w_sqrt_l_equals_t_4iz_plus_4"),
    };
    let mut out = Vec::new();
    if wanted(opts, "ladder_residual") {
        let mut w = Worst::new();
        for m in &all {
            match table.entry(basis, m) {
                Ok(e) => w.push(e.up.residual.max(e.down.residual), m.label()),
                Err(Error::LadderResidual { residual, .. }) => w.push(residual, m.label()),
                Err(e) => return Err(e),
            }
        }
        out.push(w.finish("ladder_residual", &format!("{name}.ladder_eigen_residual"), tol(opts, LADDER_TOL)));
    }
    if wanted(opts, "commutator_identity") {
        let mut w = Worst::new();
        let singles = all.iter().map(|m| {
            SpectralCoefficients::from_pairs(geometry.clone(), &[(m.clone(), c(1.0, 0.0))]).map(|f| (m.label(), f))
        });
        let singles: Vec<_> = singles.collect::<Result<_>>()?;
        for (pname, f) in singles.iter().chain(probes) {
            let lhs = commutator_w_sqrtl(basis, &table, f)?;
            let rhs = rhs_identity_apply(basis, &table, f, YIntegral::ClosedForm)?;
            w.push(identity_discrepancy(model, &lhs, &rhs, FLOOR), pname.clone());
        }
        out.push(w.finish("commutator_identity", claim, tol(opts, 1e-5)));
    }
    if wanted(opts, "closed_vs_quadrature") {
        let mut w = Worst::new();
        for v in POTENTIALS {
            let spec = TransformSpec::complex_gradient().with_potential(v)?;
            for (pname, f) in probes {
                let a = t_a_apply(basis, &table, &spec, f, YIntegral::ClosedForm)?.to_grid(basis)?;
                let b = t_a_apply(basis, &table, &spec, f, YIntegral::Quadrature)?.to_grid(basis)?;
                w.push(identity_discrepancy(model, &a, &b, FLOOR), format!("V={v} {pname}"));
            }
        }
        out.push(w.finish("closed_vs_quadrature", "transform.closed_form_equals_quadrature", tol(opts, 1e-8)));
    }
    if wanted(opts, "adjoint") {
        let mut w = Worst::new();
        let spec = TransformSpec::complex_gradient();
        let len = model.grid.len();
        for (i, pair) in probes.windows(2).enumerate() {
            let (f, g) = (&pair[0].1, &pair[1].1);
            let fs = sum_pieces(len, &pieces_from_coeffs(basis, f)?);
            let gs = sum_pieces(len, &pieces_from_coeffs(basis, g)?);
            let r = adjoint_check(basis, &table, &spec, &Probe::Coeffs(f.clone()), &Probe::Coeffs(g.clone()), YIntegral::ClosedForm)?;
            w.push(r / (model.norm(&fs) * model.norm(&gs)).max(FLOOR), format!("pair {i}"));
        }
        out.push(w.finish("adjoint", "transform.adjoint_duality", tol(opts, 1e-10)));
    }
    Ok(out)
}
