//! The five subcommands as library functions. Each returns a result value
//! with its pass flag; [`write_outputs`] turns it into JSON and CSV files.

use std::f64::consts::PI;
use std::fmt;
use std::io;

use riesz_lab_core::exec::Executor;
use riesz_lab_core::geometry::{Geometry, ModelSpace, Point};
use riesz_lab_core::norms::{verify_bounds, NormReport};
use riesz_lab_core::projection::{
    bilinear_from, bilinear_oracle, convergence_study, pointwise_from, pointwise_oracle, BilinearEstimate, Comparison,
    ConvergenceReport, Ensemble, MCConfig, MCEstimate, StudyAxis,
};
use riesz_lab_core::spectral::{Basis, LadderTable, ModeIndex, SpectralCoefficients};
use riesz_lab_core::stochastic::{EnsembleSummary, FieldImage, Observable, PathConfig, QEvaluator};
use riesz_lab_core::transforms::{pieces_from_coeffs, t_a_apply, torus_multiplier, EigenPiece, TransformSpec, YIntegral};
use riesz_lab_core::{Complex64, Error};
use serde::{Deserialize, Serialize};

use crate::config::{AxisName, ConfigError, Estimator, ExperimentConfig, ObservableSpec};
use crate::identity::{run_identity_suite, IdentityOptions, IdentityReport, LADDER_TOL};
use crate::report::{body, Envelope, Header, OutputDir};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CommandError {
    /// Bad configuration or a request the models do not support.
    Usage(String),
    /// A numerical kernel failed (quadrature, truncation, non-finite values).
    Numerical(String),
    Io(io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => EXIT_USAGE,
            CommandError::Numerical(_) | CommandError::Io(_) => EXIT_FAIL,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Usage(m) => write!(f, "usage error: {m}"),
            CommandError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CommandError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match e {
            Error::Contract(_) | Error::Domain(_) | Error::ModeOutOfRange(_) | Error::UnsupportedModel(_) => {
                CommandError::Usage(e.to_string())
            }
            _ => CommandError::Numerical(e.to_string()),
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Usage(e.to_string())
    }
}

impl From<io::Error> for CommandError {
    fn from(e: io::Error) -> Self {
        CommandError::Io(e)
    }
}

type CmdResult<T> = Result<T, CommandError>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

// ---- identity-check ----

pub fn identity_check(cfg: &ExperimentConfig) -> CmdResult<IdentityReport> {
    let opts = IdentityOptions {
        only: Some(cfg.suite.name.clone()),
        tol: cfg.identity.tol,
        n_random: cfg.identity.n_random.unwrap_or(20),
        seed: cfg.suite.seed,
    };
    Ok(run_identity_suite(&cfg.geometry, &opts)?)
}

// ---- bounds ----

pub fn bounds(cfg: &ExperimentConfig) -> CmdResult<NormReport> {
    Ok(verify_bounds(&cfg.bound_suites(), &cfg.suite_config())?)
}

// ---- mc ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseResult {
    pub estimate: MCEstimate,
    pub comparison: Comparison,
    /// Points that must lie within 3 SE of the oracle (7 in 8).
    pub required_within: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearResult {
    pub estimate: BilinearEstimate,
    pub oracle: [f64; 2],
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub geometry: String,
    pub paths: EnsembleSummary,
    pub pointwise: Option<PointwiseResult>,
    pub bilinear: Option<BilinearResult>,
}

impl McResult {
    pub fn pass(&self) -> bool {
        self.pointwise.as_ref().map_or(true, |p| p.pass) && self.bilinear.as_ref().map_or(true, |b| b.pass)
    }
}

pub fn mc_config(cfg: &ExperimentConfig, spec: &TransformSpec) -> MCConfig {
    let m = &cfg.mc;
    MCConfig {
        n_paths: m.n_paths,
        path: PathConfig {
            y0: m.y0,
            dt: m.dt,
            potential: spec.potential,
            max_steps: m.max_steps,
            coarsen: if m.coarsen > 0.0 { Some(m.coarsen) } else { None },
            levy_area: true,
        },
        start: m.start.unwrap_or_else(|| riesz_lab_core::stochastic::StartLaw::default_for(&cfg.geometry)),
        seed: m.seed,
    }
}

/// Evaluation points: `2πj/n` along the first torus axis; evenly spaced
/// grid nodes on SU(2), where the oracle lives on the grid.
pub fn evaluation_points(model: &ModelSpace, n: usize) -> Vec<Point> {
    match model.geometry {
        Geometry::Torus { dim, .. } => (0..n)
            .map(|j| {
                let mut p = vec![0.0; dim];
                p[0] = 2.0 * PI * j as f64 / n as f64;
                Point(p)
            })
            .collect(),
        _ => {
            let len = model.grid.len();
            (0..n).map(|j| model.grid_point(j * len / n + len / (2 * n))).collect()
        }
    }
}

/// `W g` as eigen-pieces for the bilinear oracle.
fn w_image_pieces(basis: &Basis, table: &LadderTable, f: &SpectralCoefficients) -> CmdResult<Vec<EigenPiece>> {
    let mut out = Vec::new();
    for (m, v) in f.iter() {
        match m {
            // W e^{ik·x} = i(k₁ + i k₂) e^{ik·x}
            ModeIndex::Torus(k) => {
                let s = c(0.0, 1.0) * c(k[0] as f64, k[1] as f64) * v;
                out.push(EigenPiece { function: basis.normalized_grid(m)?.scaled(s), nu: m.eigenvalue() });
            }
            _ => {
                let e = table.entry(basis, m)?;
                if !e.up.annihilated {
                    out.push(EigenPiece { function: e.up.function.scaled(*v), nu: e.up.eigenvalue });
                }
            }
        }
    }
    Ok(out)
}

pub fn mc<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> CmdResult<McResult> {
    let model = ModelSpace::with_defaults(cfg.geometry.clone())?;
    let basis = Basis::new(&model);
    let table = LadderTable::new(LADDER_TOL);
    let spec = cfg.transform_spec()?;
    let f = cfg.function()?;
    let mcc = mc_config(cfg, &spec);
    let ens = Ensemble::run(exec, &basis, &spec, &f, &mcc)?;
    let estimator = cfg.mc.estimator.clone().unwrap_or(Estimator::Both);
    let pointwise = if estimator != Estimator::Bilinear {
        let points = evaluation_points(&model, cfg.mc.points);
        let estimate = pointwise_from(&ens, &points, cfg.bandwidth())?;
        let oracle = pointwise_oracle(&basis, &table, &spec, &f, &points)?;
        let comparison = estimate.compare(&oracle)?;
        let required_within = (7 * points.len()).div_ceil(8);
        let pass = comparison.within_3se >= required_within;
        Some(PointwiseResult { estimate, comparison, required_within, pass })
    } else {
        None
    };
    let bilinear = if estimator != Estimator::Pointwise {
        let pf = pieces_from_coeffs(&basis, &f)?;
        let (obs, pg) = match cfg.mc.observable.clone() {
            Some(ObservableSpec::WImage) | None => {
                let fi = FieldImage { q: QEvaluator::new(&basis, &f, 0.0)?, weights: [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)] };
                (Observable::Field(fi), w_image_pieces(&basis, &table, &f)?)
            }
            Some(ObservableSpec::Terms { .. }) => {
                let g = cfg.observable_coeffs()?.expect("terms observable has coefficients");
                (Observable::Spectral(QEvaluator::new(&basis, &g, 0.0)?), pieces_from_coeffs(&basis, &g)?)
            }
        };
        let estimate = bilinear_from(&ens, &obs)?;
        let oracle = bilinear_oracle(&model, &spec, &pf, &pg, cfg.mc.y0, YIntegral::ClosedForm)?;
        let z_score = estimate.z_score(oracle);
        Some(BilinearResult { estimate, oracle: pair(oracle), z_score, pass: z_score < 3.0 })
    } else {
        None
    };
    Ok(McResult { geometry: cfg.geometry.name().into(), paths: ens.summary(), pointwise, bilinear })
}

// ---- convergence ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub geometry: String,
    pub report: ConvergenceReport,
    /// On the `y0` and path-count axes: whether the mean error is
    /// non-increasing up to 3 median SE of noise.
    pub monotone: Option<bool>,
}

impl ConvergenceResult {
    pub fn pass(&self) -> bool {
        self.monotone.unwrap_or(true)
    }
}

fn study_axis(a: &AxisName) -> StudyAxis {
    match a {
        AxisName::Y0 => StudyAxis::Y0,
        AxisName::Dt => StudyAxis::Dt,
        AxisName::NPaths => StudyAxis::NPaths,
        AxisName::Bandwidth => StudyAxis::Bandwidth,
    }
}

pub fn convergence<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> CmdResult<ConvergenceResult> {
    if !cfg.geometry.is_compact() {
        return Err(CommandError::Usage(
            "convergence studies use the pointwise estimator, which is not offered on the Heisenberg group".into(),
        ));
    }
    let model = ModelSpace::with_defaults(cfg.geometry.clone())?;
    let basis = Basis::new(&model);
    let table = LadderTable::new(LADDER_TOL);
    let spec = cfg.transform_spec()?;
    let f = cfg.function()?;
    let points = evaluation_points(&model, cfg.mc.points);
    let mut values = cfg.convergence.values.clone();
    values.sort_by(f64::total_cmp);
    let axis = study_axis(&cfg.convergence.axis);
    let report = convergence_study(exec, &basis, &table, &spec, &f, &points, &mc_config(cfg, &spec), cfg.bandwidth(), axis, &values)?;
    let monotone = match axis {
        StudyAxis::Y0 | StudyAxis::NPaths => Some(
            report.rows.windows(2).all(|w| w[1].mean_error <= w[0].mean_error + 3.0 * w[1].median_se.max(w[0].median_se)),
        ),
        _ => None,
    };
    Ok(ConvergenceResult { geometry: cfg.geometry.name().into(), report, monotone })
}

// ---- dump-kernel ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSlice {
    pub y: f64,
    pub values: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGain {
    pub mode: String,
    pub eigenvalue: f64,
    /// `e^{−y√ν}` for each tabulated `y`.
    pub poisson: Vec<f64>,
    /// `‖T_A Φ‖₂` for the normalized mode `Φ`.
    pub transform_gain: f64,
    /// Fourier multiplier of `T_A` (torus only).
    pub multiplier: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResult {
    pub geometry: String,
    /// Second argument `e` of the kernel `P_y(x, e)`.
    pub reference: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub slices: Vec<KernelSlice>,
    pub modes: Vec<ModeGain>,
}

/// Sample line through the reference point: the first torus axis, the
/// Heisenberg `x`-axis over `[−R/2, R/2]`, or the SU(2) radial chart axis.
fn kernel_line(geometry: &Geometry, n: usize) -> (Vec<f64>, Vec<Point>) {
    let t = |j: usize| j as f64 / (n - 1) as f64;
    match *geometry {
        Geometry::Torus { dim, .. } => {
            let pts = (0..n)
                .map(|j| {
                    let mut p = vec![0.0; dim];
                    p[0] = 2.0 * PI * j as f64 / n as f64;
                    Point(p)
                })
                .collect();
            (vec![0.0; dim], pts)
        }
        Geometry::Heisenberg { radius, .. } => {
            (vec![0.0; 3], (0..n).map(|j| Point(vec![radius * (t(j) - 0.5), 0.0, 0.0])).collect())
        }
        Geometry::Su2 { .. } => (vec![0.0; 3], (0..n).map(|j| Point(vec![0.5 * PI * t(j), 0.0, 0.0])).collect()),
    }
}

/// `P_y(x, e) = Σ e^{−y√ν} Φ̂(x) conj Φ̂(e)` over the truncated basis, plus a
/// per-mode gain table for the configured transform.
pub fn dump_kernel(cfg: &ExperimentConfig) -> CmdResult<KernelResult> {
    let model = ModelSpace::with_defaults(cfg.geometry.clone())?;
    let basis = Basis::new(&model);
    let table = LadderTable::new(LADDER_TOL);
    let spec = cfg.transform_spec()?;
    let (reference, points) = kernel_line(&cfg.geometry, cfg.kernel.points);
    let e = Point(reference.clone());
    let mut rows = Vec::with_capacity(basis.modes.len());
    for m in &basis.modes {
        let at_e = basis.eval_normalized(m, &e)?.conj();
        let vals: Vec<Complex64> = points.iter().map(|p| Ok(basis.eval_normalized(m, p)? * at_e)).collect::<Result<_, Error>>()?;
        rows.push(vals);
    }
    let slices = cfg
        .kernel
        .ys
        .iter()
        .map(|&y| {
            let mut acc = vec![c(0.0, 0.0); points.len()];
            for (m, vals) in basis.modes.iter().zip(&rows) {
                let w = (-y * m.eigenvalue().sqrt()).exp();
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += v * w;
                }
            }
            KernelSlice { y, values: acc.into_iter().map(pair).collect() }
        })
        .collect();
    let mut modes = Vec::with_capacity(basis.modes.len());
    for m in &basis.modes {
        let nu = m.eigenvalue();
        let poisson = cfg.kernel.ys.iter().map(|y| (-y * nu.sqrt()).exp()).collect();
        let (transform_gain, multiplier) = if m.is_zero_mode() {
            (0.0, None)
        } else {
            let f = SpectralCoefficients::from_pairs(cfg.geometry.clone(), &[(m.clone(), c(1.0, 0.0))])?;
            let t = t_a_apply(&basis, &table, &spec, &f, YIntegral::ClosedForm)?;
            match m {
                ModeIndex::Torus(k) => {
                    let mult = torus_multiplier(&spec, k, YIntegral::ClosedForm)?;
                    (mult.norm(), Some(pair(mult)))
                }
                _ => (model.norm(&t.to_grid(&basis)?), None),
            }
        };
        modes.push(ModeGain { mode: m.label(), eigenvalue: nu, poisson, transform_gain, multiplier });
    }
    Ok(KernelResult {
        geometry: cfg.geometry.name().into(),
        reference,
        points: points.into_iter().map(|p| p.0).collect(),
        slices,
        modes,
    })
}

// ---- output files ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    IdentityCheck,
    Mc,
    Bounds,
    Convergence,
    DumpKernel,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::IdentityCheck => "identity-check",
            CommandKind::Mc => "mc",
            CommandKind::Bounds => "bounds",
            CommandKind::Convergence => "convergence",
            CommandKind::DumpKernel => "dump-kernel",
        }
    }
}

#[derive(Serialize)]
struct IdentityRow<'a> {
    check: &'a str,
    claim: &'a str,
    residual: f64,
    tol: f64,
    probes: usize,
    worst_probe: &'a str,
    pass: bool,
}

#[derive(Serialize)]
struct BoundRow<'a> {
    geometry: &'a str,
    operator: &'a str,
    p: f64,
    test_function: &'a str,
    lhs: f64,
    rhs: f64,
    ratio: f64,
    bound: f64,
    margin: f64,
    pass: bool,
    lhs_tail: Option<f64>,
    rhs_tail: Option<f64>,
}

#[derive(Serialize)]
struct PointRow {
    point: String,
    count: usize,
    estimate_re: Option<f64>,
    estimate_im: Option<f64>,
    se_re: Option<f64>,
    se_im: Option<f64>,
    oracle_re: f64,
    oracle_im: f64,
    z_score: Option<f64>,
}

#[derive(Serialize)]
struct StudyCsvRow {
    axis: &'static str,
    value: f64,
    n_paths: usize,
    max_error: f64,
    mean_error: f64,
    median_se: f64,
    empty_bins: usize,
    fitted_ratio: f64,
}

#[derive(Serialize)]
struct KernelRow {
    y: f64,
    point: String,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct GainRow<'a> {
    mode: &'a str,
    eigenvalue: f64,
    transform_gain: f64,
    multiplier_re: Option<f64>,
    multiplier_im: Option<f64>,
}

fn coords(p: &[f64]) -> String {
    p.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

/// Any command's result, ready for writing.
pub enum Outcome {
    Identity(IdentityReport),
    Mc(McResult),
    Bounds(NormReport),
    Convergence(ConvergenceResult),
    Kernel(KernelResult),
}

impl Outcome {
    pub fn pass(&self) -> bool {
        match self {
            Outcome::Identity(r) => r.all_pass(),
            Outcome::Mc(r) => r.pass(),
            Outcome::Bounds(r) => r.all_pass(),
            Outcome::Convergence(r) => r.pass(),
            Outcome::Kernel(_) => true,
        }
    }

    /// Identifier of the statement the run checks.
    pub fn claim(&self, cfg: &ExperimentConfig) -> String {
        match self {
            Outcome::Identity(_) => format!("{}.operator_identities", cfg.geometry.name()),
            Outcome::Mc(_) => "projection.conditional_expectation_of_martingale_transform".into(),
            Outcome::Bounds(_) => format!("bounds.{}", cfg.suite.name),
            Outcome::Convergence(_) => "projection.finite_y0_convergence".into(),
            Outcome::Kernel(_) => "spectral.poisson_kernel".into(),
        }
    }
}

pub fn run<E: Executor>(kind: CommandKind, exec: &E, cfg: &ExperimentConfig) -> CmdResult<Outcome> {
    Ok(match kind {
        CommandKind::IdentityCheck => Outcome::Identity(identity_check(cfg)?),
        CommandKind::Mc => Outcome::Mc(mc(exec, cfg)?),
        CommandKind::Bounds => Outcome::Bounds(bounds(cfg)?),
        CommandKind::Convergence => Outcome::Convergence(convergence(exec, cfg)?),
        CommandKind::DumpKernel => Outcome::Kernel(dump_kernel(cfg)?),
    })
}

fn envelope<'a, T: Serialize>(kind: CommandKind, workers: usize, claim: &'a str, cfg: &'a ExperimentConfig, r: &'a T, pass: bool) -> Envelope<'a, T> {
    Envelope { header: Header::new(kind.name(), workers), body: body(claim, cfg, r, pass) }
}

/// Writes `<command>.json` and the CSV mirrors into `cfg.output.dir`;
/// returns the written paths.
pub fn write_outputs(kind: CommandKind, outcome: &Outcome, cfg: &ExperimentConfig, workers: usize) -> CmdResult<Vec<std::path::PathBuf>> {
    let out = OutputDir::create(&cfg.output.dir)?;
    let claim = outcome.claim(cfg);
    let pass = outcome.pass();
    let json_name = format!("{}.json", kind.name());
    let mut written = Vec::new();
    match outcome {
        Outcome::Identity(r) => {
            written.push(out.write_json(&json_name, &envelope(kind, workers, &claim, cfg, r, pass))?);
            let rows: Vec<_> = r
                .checks
                .iter()
                .map(|c| IdentityRow {
                    check: &c.name,
                    claim: &c.claim,
                    residual: c.residual,
                    tol: c.tol,
                    probes: c.probes,
                    worst_probe: &c.worst_probe,
                    pass: c.pass,
                })
                .collect();
            written.push(out.write_csv("identity-check.csv", &rows)?);
        }
        Outcome::Bounds(r) => {
            written.push(out.write_json(&json_name, &envelope(kind, workers, &claim, cfg, r, pass))?);
            let rows: Vec<_> = r
                .entries
                .iter()
                .map(|e| BoundRow {
                    geometry: &e.geometry,
                    operator: &e.operator,
                    p: e.p,
                    test_function: &e.test_function,
                    lhs: e.lhs,
                    rhs: e.rhs,
                    ratio: e.ratio,
                    bound: e.bound,
                    margin: e.margin,
                    pass: e.pass,
                    lhs_tail: e.tail.map(|t| t[0]),
                    rhs_tail: e.tail.map(|t| t[1]),
                })
                .collect();
            written.push(out.write_csv("bounds.csv", &rows)?);
        }
        Outcome::Mc(r) => {
            written.push(out.write_json(&json_name, &envelope(kind, workers, &claim, cfg, r, pass))?);
            if let Some(pw) = &r.pointwise {
                let e = &pw.estimate;
                let rows: Vec<_> = (0..e.points.len())
                    .map(|i| PointRow {
                        point: coords(&e.points[i]),
                        count: e.counts[i],
                        estimate_re: e.estimates[i].map(|v| v[0]),
                        estimate_im: e.estimates[i].map(|v| v[1]),
                        se_re: e.se[i].map(|v| v[0]),
                        se_im: e.se[i].map(|v| v[1]),
                        oracle_re: pw.comparison.oracle[i][0],
                        oracle_im: pw.comparison.oracle[i][1],
                        z_score: pw.comparison.z_scores[i],
                    })
                    .collect();
                written.push(out.write_csv("mc-pointwise.csv", &rows)?);
            }
        }
        Outcome::Convergence(r) => {
            written.push(out.write_json(&json_name, &envelope(kind, workers, &claim, cfg, r, pass))?);
            let axis = match r.report.axis {
                StudyAxis::Y0 => "y0",
                StudyAxis::Dt => "dt",
                StudyAxis::NPaths => "n_paths",
                StudyAxis::Bandwidth => "bandwidth",
            };
            let rows: Vec<_> = r
                .report
                .rows
                .iter()
                .map(|s| StudyCsvRow {
                    axis,
                    value: s.value,
                    n_paths: s.n_paths,
                    max_error: s.max_error,
                    mean_error: s.mean_error,
                    median_se: s.median_se,
                    empty_bins: s.empty_bins,
                    fitted_ratio: s.fitted_ratio,
                })
                .collect();
            written.push(out.write_csv("convergence.csv", &rows)?);
        }
        Outcome::Kernel(r) => {
            written.push(out.write_json(&json_name, &envelope(kind, workers, &claim, cfg, r, pass))?);
            let mut rows = Vec::new();
            for s in &r.slices {
                for (p, v) in r.points.iter().zip(&s.values) {
                    rows.push(KernelRow { y: s.y, point: coords(p), re: v[0], im: v[1] });
                }
            }
            written.push(out.write_csv("dump-kernel.csv", &rows)?);
            let gains: Vec<_> = r
                .modes
                .iter()
                .map(|m| GainRow {
                    mode: &m.mode,
                    eigenvalue: m.eigenvalue,
                    transform_gain: m.transform_gain,
                    multiplier_re: m.multiplier.map(|z| z[0]),
                    multiplier_im: m.multiplier.map(|z| z[1]),
                })
                .collect();
            written.push(out.write_csv("dump-kernel-modes.csv", &gains)?);
        }
    }
    Ok(written)
}

/// One line per check, entry group or estimator for the terminal.
pub fn summary_lines(outcome: &Outcome) -> Vec<String> {
    let flag = |p: bool| if p { "PASS" } else { "FAIL" };
    match outcome {
        Outcome::Identity(r) => r
            .checks
            .iter()
            .map(|c| format!("{} {:<22} residual {:.3e} (tol {:.1e}, {} probes)", flag(c.pass), c.name, c.residual, c.tol, c.probes))
            .collect(),
        Outcome::Bounds(r) => {
            let mut v: Vec<String> = r
                .worst
                .iter()
                .map(|w| format!("{} p={:<4} max ratio {:.6} / bound {:.6} ({})", w.operator, w.p, w.max_ratio, w.bound, w.test_function))
                .collect();
            v.push(format!("{} {} entries, {} failing", flag(r.all_pass()), r.entries.len(), r.failures().count()));
            v
        }
        Outcome::Mc(r) => {
            let mut v = vec![format!("paths {} mean steps {:.0}", r.paths.n_paths, r.paths.mean_steps)];
            if let Some(p) = &r.pointwise {
                v.push(format!(
                    "{} pointwise: {}/{} points within 3 SE (need {}), fitted ratio {:.4}",
                    flag(p.pass),
                    p.comparison.within_3se,
                    p.estimate.points.len(),
                    p.required_within,
                    p.comparison.fitted_ratio
                ));
            }
            if let Some(b) = &r.bilinear {
                v.push(format!(
                    "{} bilinear: {:.6}{:+.6}i vs oracle {:.6}{:+.6}i, z = {:.2}",
                    flag(b.pass),
                    b.estimate.estimate[0],
                    b.estimate.estimate[1],
                    b.oracle[0],
                    b.oracle[1],
                    b.z_score
                ));
            }
            v
        }
        Outcome::Convergence(r) => {
            let mut v: Vec<String> = r
                .report
                .rows
                .iter()
                .map(|s| format!("value {:<10} mean error {:.4e} max error {:.4e} median SE {:.4e}", s.value, s.mean_error, s.max_error, s.median_se))
                .collect();
            if let Some(m) = r.monotone {
                v.push(format!("{} error monotone in the axis value", flag(m)));
            }
            v
        }
        Outcome::Kernel(r) => vec![format!("{} slices x {} points, {} modes", r.slices.len(), r.points.len(), r.modes.len())],
    }
}
