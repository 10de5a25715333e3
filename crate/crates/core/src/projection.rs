//! Monte Carlo estimates of `T_A f`: the conditional expectation of the Itô
//! transform integral given the exit position (pointwise, compact models), and
//! the integrated bilinear form `E[ḡ(Y_τ) · I]` with its deterministic oracle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{mean_se, pairwise_sum, Executor};
use crate::geometry::{wrap_angle, Field, Geometry, ModelSpace, Point, Su2};
use crate::quad::{integrate, integrate_to_infinity, Tolerance};
use crate::spectral::{synthesize, Basis, LadderTable, SpectralCoefficients};
use crate::stochastic::{run_transform_ensemble, summarize, EnsembleSummary, Observable, PathConfig, PathSample, QEvaluator, StartLaw, State};
use crate::transforms::{t_a_apply, EigenPiece, TransformSpec, Transformed, YIntegral};

/// Fewest paths any estimator accepts.
pub const MIN_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub n_paths: usize,
    pub path: PathConfig,
    pub start: StartLaw,
    pub seed: u64,
}

impl MCConfig {
    pub fn new(geometry: &Geometry, n_paths: usize, y0: f64, dt: f64, seed: u64) -> Self {
        Self { n_paths, path: PathConfig { y0, dt, ..PathConfig::default() }, start: StartLaw::default_for(geometry), seed }
    }

    fn check(&self) -> Result<()> {
        if self.n_paths < MIN_PATHS {
            return Err(Error::Contract(format!("at least {MIN_PATHS} paths are required, got {}", self.n_paths)));
        }
        self.path.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Indicator of the ball of radius `bandwidth` (a spatial bin).
    Ball,
    /// `1 − (d / bandwidth)²` on the ball.
    Epanechnikov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub radius: f64,
    pub kernel: Kernel,
}

impl Default for Bandwidth {
    fn default() -> Self {
        Self { radius: 0.1, kernel: Kernel::Ball }
    }
}

/// Per-path Itô integrals for one `(spec, f)` pair, reusable across
/// estimators.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub geometry: Geometry,
    pub config: MCConfig,
    pub samples: Vec<PathSample>,
}

impl Ensemble {
    pub fn run<E: Executor>(exec: &E, basis: &Basis, spec: &TransformSpec, f: &SpectralCoefficients, config: &MCConfig) -> Result<Self> {
        config.check()?;
        let geometry = basis.model.geometry.clone();
        let path = PathConfig { potential: spec.potential, ..config.path };
        let q = QEvaluator::new(basis, f, spec.potential)?;
        let samples = run_transform_ensemble(exec, &geometry, &path, &config.start, spec, &q, config.n_paths, config.seed)?;
        Ok(Self { geometry, config: MCConfig { path, ..*config }, samples })
    }

    /// The first `n` paths: identical to a run with `n_paths = n`.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.samples.len());
        Self { geometry: self.geometry.clone(), config: MCConfig { n_paths: n, ..self.config }, samples: self.samples[..n].to_vec() }
    }

    pub fn summary(&self) -> EnsembleSummary {
        let v: Vec<Complex64> = self.samples.iter().map(|s| s.ito).collect();
        summarize(&self.samples, &v)
    }
}

/// Pointwise estimates with standard errors; `None` marks an empty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub points: Vec<Vec<f64>>,
    pub estimates: Vec<Option<[f64; 2]>>,
    pub se: Vec<Option<[f64; 2]>>,
    pub counts: Vec<usize>,
    pub n_paths: usize,
    pub y0: f64,
    pub dt: f64,
    pub bandwidth: Bandwidth,
    pub seed: u64,
}

impl MCEstimate {
    pub fn empty_bins(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_none()).count()
    }

    /// Median of the combined complex SE over nonempty bins.
    pub fn median_se(&self) -> f64 {
        let mut s: Vec<f64> = self.se.iter().flatten().map(|v| v[0].hypot(v[1])).collect();
        if s.is_empty() {
            return 0.0;
        }
        s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        s[s.len() / 2]
    }

    pub fn compare(&self, oracle: &[Complex64]) -> Result<Comparison> {
        if oracle.len() != self.points.len() {
            return Err(Error::Contract("oracle length differs from the point list".into()));
        }
        let mut z = Vec::with_capacity(oracle.len());
        let (mut num, mut den) = (0.0, 0.0);
        for ((e, s), o) in self.estimates.iter().zip(&self.se).zip(oracle) {
            match (e, s) {
                (Some(e), Some(s)) => {
                    let est = Complex64::new(e[0], e[1]);
                    z.push(Some(z_score(est - o, s[0].hypot(s[1]))));
                    num += (o.conj() * est).re;
                    den += o.norm_sqr();
                }
                _ => z.push(None),
            }
        }
        let within = z.iter().flatten().filter(|&&v| v <= 3.0).count();
        Ok(Comparison {
            oracle: oracle.iter().map(|o| [o.re, o.im]).collect(),
            z_scores: z,
            within_3se: within,
            fitted_ratio: if den > 0.0 { num / den } else { 0.0 },
        })
    }
}

fn z_score(diff: Complex64, se: f64) -> f64 {
    if se > 0.0 {
        diff.norm() / se
    } else if diff.norm() == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Estimates against an oracle. `fitted_ratio` is the least-squares factor
/// `c` in `estimate ≈ c · oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub oracle: Vec<[f64; 2]>,
    pub z_scores: Vec<Option<f64>>,
    pub within_3se: usize,
    pub fitted_ratio: f64,
}

fn distance(geometry: &Geometry, state: &State, pt: &Point) -> Result<f64> {
    match (geometry, state) {
        (Geometry::Torus { dim, .. }, State::Flat(p)) => {
            let mut s = 0.0;
            for i in 0..*dim {
                let d = wrap_angle(p[i] - pt.0[i]);
                let d = d.min(2.0 * core::f64::consts::PI - d);
                s += d * d;
            }
            Ok(s.sqrt())
        }
        (Geometry::Su2 { .. }, State::Group(g)) => Ok(g.distance(&Su2::from_chart(pt.0[0], pt.0[1], pt.0[2]))),
        _ => Err(Error::UnsupportedModel("pointwise conditioning is offered on the torus and SU(2) only")),
    }
}

/// `T_A f(x) ≈ −½ E[I | Y_τ ≈ x]` by kernel regression of the per-path
/// integrals on the exit position.
pub fn pointwise_from(ensemble: &Ensemble, points: &[Point], bandwidth: Bandwidth) -> Result<MCEstimate> {
    if matches!(ensemble.geometry, Geometry::Heisenberg { .. }) {
        return Err(Error::UnsupportedModel(
            "pointwise conditioning is not offered on the Heisenberg group; use the bilinear estimator",
        ));
    }
    if !(bandwidth.radius > 0.0) {
        return Err(Error::Contract(format!("bandwidth must be positive, got {}", bandwidth.radius)));
    }
    if ensemble.samples.len() < MIN_PATHS {
        return Err(Error::Contract(format!("at least {MIN_PATHS} paths are required, got {}", ensemble.samples.len())));
    }
    let mut estimates = Vec::with_capacity(points.len());
    let mut ses = Vec::with_capacity(points.len());
    let mut counts = Vec::with_capacity(points.len());
    for pt in points {
        let mut w = Vec::new();
        let mut vals = Vec::new();
        for s in &ensemble.samples {
            let d = distance(&ensemble.geometry, &s.end.state, pt)?;
            if d < bandwidth.radius {
                let u = d / bandwidth.radius;
                w.push(match bandwidth.kernel {
                    Kernel::Ball => 1.0,
                    Kernel::Epanechnikov => 1.0 - u * u,
                });
                vals.push(s.ito);
            }
        }
        counts.push(vals.len());
        let total = pairwise_sum(&w);
        if vals.is_empty() || total <= 0.0 {
            estimates.push(None);
            ses.push(None);
            continue;
        }
        let weighted: Vec<Complex64> = vals.iter().zip(&w).map(|(v, w)| v * *w).collect();
        let mean = pairwise_sum(&weighted) / total;
        // ratio-estimator variance with the small-sample factor n / (n − 1)
        let n = vals.len() as f64;
        let dev = |part: fn(Complex64) -> f64| {
            let sq: Vec<f64> = vals.iter().zip(&w).map(|(v, w)| (w * (part(*v) - part(mean))).powi(2)).collect();
            let corr = if n > 1.0 { n / (n - 1.0) } else { 0.0 };
            (pairwise_sum(&sq) * corr).sqrt() / total
        };
        let (se_re, se_im) = (dev(|z| z.re), dev(|z| z.im));
        let est = mean * -0.5;
        estimates.push(Some([est.re, est.im]));
        ses.push(Some([0.5 * se_re, 0.5 * se_im]));
    }
    let cfg = &ensemble.config;
    Ok(MCEstimate {
        points: points.iter().map(|p| p.0.clone()).collect(),
        estimates,
        se: ses,
        counts,
        n_paths: ensemble.samples.len(),
        y0: cfg.path.y0,
        dt: cfg.path.dt,
        bandwidth,
        seed: cfg.seed,
    })
}

/// Pointwise Monte Carlo estimate of `T_A f` at `points`.
pub fn gv_pointwise<E: Executor>(
    exec: &E,
    basis: &Basis,
    spec: &TransformSpec,
    f: &SpectralCoefficients,
    points: &[Point],
    config: &MCConfig,
    bandwidth: Bandwidth,
) -> Result<MCEstimate> {
    if matches!(basis.model.geometry, Geometry::Heisenberg { .. }) {
        return Err(Error::UnsupportedModel(
            "pointwise conditioning is not offered on the Heisenberg group; use the bilinear estimator",
        ));
    }
    pointwise_from(&Ensemble::run(exec, basis, spec, f, config)?, points, bandwidth)
}

/// `T_A f` at `points` from the spectral side. On SU(2) the points must be
/// quadrature nodes of the model grid.
pub fn pointwise_oracle(basis: &Basis, table: &LadderTable, spec: &TransformSpec, f: &SpectralCoefficients, points: &[Point]) -> Result<Vec<Complex64>> {
    match t_a_apply(basis, table, spec, f, YIntegral::ClosedForm)? {
        Transformed::Coefficients(co) => points.iter().map(|p| synthesize(basis, &co, p)).collect(),
        Transformed::Grid(g) => {
            let model = basis.model;
            points
                .iter()
                .map(|p| {
                    (0..model.grid.len())
                        .find(|&i| model.grid_point(i).0.iter().zip(&p.0).all(|(a, b)| (a - b).abs() < 1e-12))
                        .map(|i| g.values[i])
                        .ok_or_else(|| Error::Domain(format!("{:?} is not a grid node", p.0)))
                })
                .collect()
        }
    }
}

/// `E[w ḡ(Y_τ) I]` with its standard error (`w = dμ/dq` of the start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearEstimate {
    pub estimate: [f64; 2],
    pub se: [f64; 2],
    pub n_paths: usize,
    pub y0: f64,
    pub dt: f64,
    pub seed: u64,
}

impl BilinearEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.estimate[0], self.estimate[1])
    }

    pub fn z_score(&self, oracle: Complex64) -> f64 {
        z_score(self.value() - oracle, self.se[0].hypot(self.se[1]))
    }
}

pub fn bilinear_from(ensemble: &Ensemble, g: &Observable) -> Result<BilinearEstimate> {
    if ensemble.samples.len() < MIN_PATHS {
        return Err(Error::Contract(format!("at least {MIN_PATHS} paths are required, got {}", ensemble.samples.len())));
    }
    let vals: Vec<Complex64> = ensemble.samples.iter().map(|s| g.value(&s.end.state).conj() * s.ito * s.weight).collect();
    let (mr, sr) = mean_se(&vals.iter().map(|v| v.re).collect::<Vec<_>>());
    let (mi, si) = mean_se(&vals.iter().map(|v| v.im).collect::<Vec<_>>());
    let cfg = &ensemble.config;
    Ok(BilinearEstimate { estimate: [mr, mi], se: [sr, si], n_paths: vals.len(), y0: cfg.path.y0, dt: cfg.path.dt, seed: cfg.seed })
}

/// Monte Carlo estimate of `E[ḡ(Y_τ) I]`, available on all three models.
pub fn gv_bilinear<E: Executor>(
    exec: &E,
    basis: &Basis,
    spec: &TransformSpec,
    f: &SpectralCoefficients,
    g: &Observable,
    config: &MCConfig,
) -> Result<BilinearEstimate> {
    bilinear_from(&Ensemble::run(exec, basis, spec, f, config)?, g)
}

/// `∫_0^∞ (y0 ∧ y) e^{−sy} dy`.
pub fn green_weight(y0: f64, s: f64, method: YIntegral) -> Result<f64> {
    if !(s > 0.0 && y0 > 0.0) {
        return Err(Error::Domain(format!("green weight needs y0 > 0 and a positive rate, got y0 = {y0}, s = {s}")));
    }
    match method {
        YIntegral::ClosedForm => Ok(-(-s * y0).exp_m1() / (s * s)),
        YIntegral::Quadrature => {
            let tol = Tolerance { abs: 1e-15, rel: 1e-12, max_intervals: 2000 };
            let (near, _) = integrate(|y| y * (-s * y).exp(), 0.0, y0, tol)?;
            let (far, _) = integrate_to_infinity(|y| (-s * y).exp(), y0, tol)?;
            Ok(near + y0 * far)
        }
    }
}

/// `(F_1 φ, …, F_d φ, −√ν̃ φ)` on the grid.
fn gradient_pieces(model: &ModelSpace, piece: &EigenPiece, shift: f64) -> Result<Vec<crate::grid::GridFunction>> {
    let d = model.horizontal_dim();
    let mut out = Vec::with_capacity(d + 1);
    for k in 0..d {
        out.push(model.apply_field_grid(Field::Horizontal(k), &piece.function)?);
    }
    let root = (piece.nu + shift).sqrt();
    out.push(piece.function.scaled(Complex64::new(-root, 0.0)));
    Ok(out)
}

/// Deterministic value of `E[ḡ(Y_τ) I]` started from the reference measure:
/// `2 ∫_0^∞ (y0 ∧ y) ∫_M Σ a_kl conj(u^g_k) u^f_l dμ dy`, where
/// `u = (∇Q^V, ∂_y Q^V)` and `f`, `g` are sums of grid eigenfunctions.
pub fn bilinear_oracle(model: &ModelSpace, spec: &TransformSpec, f: &[EigenPiece], g: &[EigenPiece], y0: f64, method: YIntegral) -> Result<Complex64> {
    let d = model.horizontal_dim();
    if spec.dim() != d {
        return Err(Error::Contract("transform matrix does not match the model".into()));
    }
    let shift = -spec.potential;
    let uf: Vec<_> = f.iter().map(|p| gradient_pieces(model, p, shift)).collect::<Result<_>>()?;
    let ug: Vec<_> = g.iter().map(|p| gradient_pieces(model, p, shift)).collect::<Result<_>>()?;
    let mut total = Complex64::new(0.0, 0.0);
    for (pf, a) in f.iter().zip(&uf) {
        for (pg, b) in g.iter().zip(&ug) {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..=d {
                for l in 0..=d {
                    let akl = spec.matrix.get(k, l);
                    if akl.norm() != 0.0 {
                        s += akl * model.inner(&a[l], &b[k]);
                    }
                }
            }
            if s.norm() == 0.0 {
                continue;
            }
            let rate = (pf.nu + shift).sqrt() + (pg.nu + shift).sqrt();
            total += s * 2.0 * green_weight(y0, rate, method)?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyAxis {
    Y0,
    Dt,
    NPaths,
    Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub value: f64,
    pub n_paths: usize,
    /// Largest `|estimate − T_A f|` over nonempty bins.
    pub max_error: f64,
    pub mean_error: f64,
    pub median_se: f64,
    pub empty_bins: usize,
    pub fitted_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub axis: StudyAxis,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log(median SE)` against `log(n_paths)`, on the
    /// path-count axis.
    pub se_exponent: Option<f64>,
}

/// Pointwise error against the spectral `T_A f` as one parameter varies.
/// Bandwidth and path-count rows reuse one ensemble (paths are seeded by
/// index, so a prefix equals a smaller run).
#[allow(clippy::too_many_arguments)]
pub fn convergence_study<E: Executor>(
    exec: &E,
    basis: &Basis,
    table: &LadderTable,
    spec: &TransformSpec,
    f: &SpectralCoefficients,
    points: &[Point],
    base: &MCConfig,
    bandwidth: Bandwidth,
    axis: StudyAxis,
    values: &[f64],
) -> Result<ConvergenceReport> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Contract("study values must be positive".into()));
    }
    let oracle = pointwise_oracle(basis, table, spec, f, points)?;
    let row = |value: f64, est: &MCEstimate| -> Result<StudyRow> {
        let cmp = est.compare(&oracle)?;
        let errs: Vec<f64> = est
            .estimates
            .iter()
            .zip(&oracle)
            .filter_map(|(e, o)| e.map(|e| (Complex64::new(e[0], e[1]) - o).norm()))
            .collect();
        Ok(StudyRow {
            value,
            n_paths: est.n_paths,
            max_error: errs.iter().cloned().fold(0.0, f64::max),
            mean_error: if errs.is_empty() { 0.0 } else { pairwise_sum(&errs) / errs.len() as f64 },
            median_se: est.median_se(),
            empty_bins: est.empty_bins(),
            fitted_ratio: cmp.fitted_ratio,
        })
    };
    let mut rows = Vec::with_capacity(values.len());
    match axis {
        StudyAxis::Y0 | StudyAxis::Dt => {
            for &v in values {
                let mut cfg = *base;
                if axis == StudyAxis::Y0 {
                    cfg.path.y0 = v;
                } else {
                    cfg.path.dt = v;
                }
                let ens = Ensemble::run(exec, basis, spec, f, &cfg)?;
                rows.push(row(v, &pointwise_from(&ens, points, bandwidth)?)?);
            }
        }
        StudyAxis::Bandwidth => {
            let ens = Ensemble::run(exec, basis, spec, f, base)?;
            for &v in values {
                let bw = Bandwidth { radius: v, ..bandwidth };
                rows.push(row(v, &pointwise_from(&ens, points, bw)?)?);
            }
        }
        StudyAxis::NPaths => {
            let max = values.iter().cloned().fold(0.0, f64::max) as usize;
            let ens = Ensemble::run(exec, basis, spec, f, &MCConfig { n_paths: max, ..*base })?;
            for &v in values {
                rows.push(row(v, &pointwise_from(&ens.prefix(v as usize), points, bandwidth)?)?);
            }
        }
    }
    let se_exponent = if axis == StudyAxis::NPaths && rows.len() >= 2 {
        let pts: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.median_se > 0.0).map(|r| ((r.n_paths as f64).ln(), r.median_se.ln())).collect();
        slope(&pts)
    } else {
        None
    };
    Ok(ConvergenceReport { axis, rows, se_exponent })
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 { Some(sxy / sxx) } else { None }
}

/// Evaluation points `2πj / n` on the circle.
pub fn circle_points(n: usize) -> Vec<Point> {
    (0..n).map(|j| Point(vec![2.0 * core::f64::consts::PI * j as f64 / n as f64])).collect()
}
