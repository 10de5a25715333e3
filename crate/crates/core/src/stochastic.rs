//! Simulation of the pair `(Y_t, B_t)`: the geometry diffusion with generator
//! `Σ X_i²` and the background Brownian motion with generator `d²/dy²`, killed
//! when `B` hits zero.
//!
//! Every Brownian increment has variance `2h` for a step of length `h`; the
//! conversion happens only in [`gaussian_increment`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{mean_se, pairwise_sum, path_rng, Executor};
use crate::geometry::{wrap_angle, Geometry, Su2};
use crate::spectral::{Basis, ModeIndex, SpectralCoefficients};
use crate::special::{jacobi, jacobi_derivative, laguerre, laguerre_derivative};
use crate::transforms::TransformSpec;

const TWO_PI: f64 = 2.0 * PI;

/// Position of the geometry diffusion. Torus angles (unwrapped, first `d`
/// entries) and Heisenberg `(x, y, z)` use `Flat`; SU(2) uses the group element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum State {
    Flat([f64; 3]),
    Group(Su2),
}

impl State {
    /// Chart coordinates: wrapped torus angles, Heisenberg `(x, y, z)` with `z`
    /// unwrapped, SU(2) `(r, θ, z)`.
    pub fn chart(&self, geometry: &Geometry) -> Vec<f64> {
        match (self, geometry) {
            (State::Flat(p), Geometry::Torus { dim, .. }) => p[..*dim].iter().map(|&v| wrap_angle(v)).collect(),
            (State::Flat(p), _) => p.to_vec(),
            (State::Group(g), _) => g.to_chart().to_vec(),
        }
    }
}

/// `√(2h) · N(0, 1)`: the increment of a Brownian motion with generator `d²/dx²`.
pub fn gaussian_increment<R: Rng>(rng: &mut R, h: f64) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    (2.0 * h).sqrt() * n
}

/// Law of `Y_0`, with the density ratio `dμ/dq` carried as a weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartLaw {
    /// Normalized Haar measure (torus or SU(2)); weight 1.
    Haar,
    /// Heisenberg: `(x, y)` from a mixture of the uniform law on
    /// `[−w, w]²` and a centered Gaussian of deviation `core_sigma` (mixture
    /// weight `core_weight`, 0 for the plain box), `z` uniform on `[0, 2π)`.
    /// The weight is `1 / q` for Lebesgue measure.
    HeisenbergBox { half_width: f64, core_sigma: f64, core_weight: f64 },
    /// Heisenberg: the exit position `Y_τ` rather than `Y_0`, with `(x, y)`
    /// from a centered Gaussian of deviation `sigma` and `z` uniform. The
    /// path is run backward from it by [`simulate_reversed`], which covers the
    /// whole plane without the leakage of a box. Weight `1 / q`.
    HeisenbergExit { sigma: f64 },
    /// A fixed chart point `(up to three coordinates)`; weight 1.
    Fixed { point: [f64; 3] },
}

impl StartLaw {
    pub fn default_for(geometry: &Geometry) -> Self {
        match geometry {
            Geometry::Heisenberg { .. } => StartLaw::HeisenbergExit { sigma: 2.0 },
            _ => StartLaw::Haar,
        }
    }

    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        match (self, geometry) {
            (StartLaw::Haar, Geometry::Heisenberg { .. }) => {
                Err(Error::Contract("the Heisenberg reference measure is infinite; use a boxed start".into()))
            }
            (StartLaw::HeisenbergBox { half_width, core_sigma, core_weight }, Geometry::Heisenberg { .. }) => {
                if *half_width > 0.0 && *core_sigma > 0.0 && (0.0..1.0).contains(core_weight) {
                    Ok(())
                } else {
                    Err(Error::Contract("box start needs half_width > 0, core_sigma > 0, core_weight in [0, 1)".into()))
                }
            }
            (StartLaw::HeisenbergBox { .. }, _) => Err(Error::Contract("box starts are for the Heisenberg model".into())),
            (StartLaw::HeisenbergExit { sigma }, Geometry::Heisenberg { .. }) => {
                if *sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Contract(format!("exit law needs sigma > 0, got {sigma}")))
                }
            }
            (StartLaw::HeisenbergExit { .. }, _) => Err(Error::Contract("exit laws are for the Heisenberg model".into())),
            _ => Ok(()),
        }
    }

    /// Whether the sampled point is `Y_τ` (see [`StartLaw::HeisenbergExit`]).
    pub fn is_reversed(&self) -> bool {
        matches!(self, StartLaw::HeisenbergExit { .. })
    }

    pub fn sample<R: Rng>(&self, geometry: &Geometry, rng: &mut R) -> (State, f64) {
        match *self {
            StartLaw::Haar => match geometry {
                Geometry::Su2 { .. } => {
                    let v: [f64; 4] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                    let mut g = Su2 { a: Complex64::new(v[0], v[1]), b: Complex64::new(v[2], v[3]) };
                    g.renormalize();
                    (State::Group(g), 1.0)
                }
                _ => {
                    let mut p = [0.0; 3];
                    for v in p.iter_mut().take(geometry.horizontal_dim()) {
                        *v = rng.gen_range(0.0..TWO_PI);
                    }
                    (State::Flat(p), 1.0)
                }
            },
            StartLaw::HeisenbergBox { half_width: w, core_sigma: s, core_weight: cw } => {
                let core = cw > 0.0 && rng.gen::<f64>() < cw;
                let (x, y) = if core {
                    (s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
                } else {
                    (rng.gen_range(-w..w), rng.gen_range(-w..w))
                };
                let z = rng.gen_range(0.0..TWO_PI);
                let inside = x.abs() <= w && y.abs() <= w;
                let q_box = if inside { (1.0 - cw) / (4.0 * w * w) } else { 0.0 };
                let q_core = cw * (-(x * x + y * y) / (2.0 * s * s)).exp() / (TWO_PI * s * s);
                (State::Flat([x, y, z]), TWO_PI / (q_box + q_core))
            }
            StartLaw::HeisenbergExit { sigma: s } => {
                let (x, y) = (s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal));
                let z = rng.gen_range(0.0..TWO_PI);
                let q = (-(x * x + y * y) / (2.0 * s * s)).exp() / (TWO_PI * s * s);
                (State::Flat([x, y, z]), TWO_PI / q)
            }
            StartLaw::Fixed { point } => match geometry {
                Geometry::Su2 { .. } => (State::Group(Su2::from_chart(point[0], point[1], point[2])), 1.0),
                _ => (State::Flat(point), 1.0),
            },
        }
    }
}

/// Time-stepping parameters of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub y0: f64,
    pub dt: f64,
    /// Constant potential `V = c ≤ 0`.
    pub potential: f64,
    pub max_steps: usize,
    /// When set to `η`, steps taken while `B > y0` grow to
    /// `max(dt, (η (B − y0))² / 2)`; the integrands decay like `e^{−B√ν}`
    /// there.
    pub coarsen: Option<f64>,
    /// Adds a Gaussian Lévy-area term with the conditional variance of the
    /// true area, so coarse steps keep the law of the vertical coordinate.
    pub levy_area: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { y0: 4.0, dt: 1e-3, potential: 0.0, max_steps: 10_000_000, coarsen: Some(0.2), levy_area: true }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.y0 > 0.0 && self.y0.is_finite()) {
            return Err(Error::Contract(format!("y0 must be positive, got {}", self.y0)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Contract(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.potential <= 0.0 && self.potential.is_finite()) {
            return Err(Error::Contract(format!("potential must be a constant <= 0, got {}", self.potential)));
        }
        if let Some(eta) = self.coarsen {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::Contract(format!("coarsening factor must lie in (0, 1), got {eta}")));
            }
        }
        Ok(())
    }

    fn step_size(&self, b: f64) -> f64 {
        match self.coarsen {
            Some(eta) if b > self.y0 => {
                let e = eta * (b - self.y0);
                self.dt.max(0.5 * e * e)
            }
            _ => self.dt,
        }
    }
}

/// What a visitor sees at each step: the state before the step and the
/// increments that move it.
#[derive(Debug)]
pub struct StepView<'a> {
    pub index: usize,
    pub t: f64,
    pub h: f64,
    pub state: &'a State,
    pub b: f64,
    pub dbeta: &'a [f64],
    pub db: f64,
    /// `∫_0^t V(Y_s) ds`.
    pub log_fk: f64,
}

pub trait PathVisitor {
    /// Returns `false` to stop the simulation after this step.
    fn step(&mut self, v: &StepView) -> bool;
}

impl PathVisitor for () {
    fn step(&mut self, _: &StepView) -> bool {
        true
    }
}

/// Terminal data of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    /// Exit time `τ`, or the stopping time if a visitor ended the path.
    pub tau: f64,
    pub state: State,
    pub steps: usize,
    /// `∫_0^τ V(Y_s) ds`.
    pub log_fk: f64,
    pub exited: bool,
    /// `Σ |Δβ|² / (2h d)` accumulated over steps, and the step count, for the
    /// increment-variance check.
    pub increment_sq: f64,
}

fn advance<R: Rng>(geometry: &Geometry, state: &mut State, dbeta: &[f64], h: f64, levy: bool, rng: &mut R) {
    match (geometry, state) {
        (Geometry::Torus { dim, .. }, State::Flat(p)) => {
            for i in 0..*dim {
                p[i] += dbeta[i];
            }
        }
        (Geometry::Heisenberg { .. }, State::Flat(p)) => {
            let (dx, dy) = (dbeta[0], dbeta[1]);
            // midpoint rule: ½((x + dx/2) dy − (y + dy/2) dx) = ½(x dy − y dx)
            let mut dz = 0.5 * (p[0] * dy - p[1] * dx);
            if levy {
                dz += levy_area(rng, h, dx, dy);
            }
            p[0] += dx;
            p[1] += dy;
            p[2] += dz;
        }
        (Geometry::Su2 { .. }, State::Group(g)) => {
            let (dx, dy) = (dbeta[0], dbeta[1]);
            let gamma = if levy { 2.0 * levy_area(rng, h, dx, dy) } else { 0.0 };
            *g = g.mul(&Su2::exp_algebra(dx, dy, gamma));
            g.renormalize();
        }
        _ => unreachable!("state kind matches geometry"),
    }
}

/// Gaussian stand-in for the Lévy area `½∫(x dy − y dx)` of a variance-2
/// planar Brownian motion over a step of length `h`, conditional on its
/// increment: variance `h²/3 + h|Δ|²/6`.
fn levy_area<R: Rng>(rng: &mut R, h: f64, dx: f64, dy: f64) -> f64 {
    let var = h * h / 3.0 + h * (dx * dx + dy * dy) / 6.0;
    let n: f64 = rng.sample(StandardNormal);
    var.sqrt() * n
}

/// One step of `B` from `b > 0`: the increment and whether it exits, with
/// the exit increment clipped to `−b`.
fn b_step<R: Rng>(rng: &mut R, b: f64, h: f64) -> (f64, bool) {
    let db = gaussian_increment(rng, h);
    let b_new = b + db;
    let exited = if b_new <= 0.0 {
        true
    } else {
        // bridge crossing probability for variance-2 increments; below
        // e^{-50} the draw is skipped
        let e = b * b_new / h;
        e < 50.0 && rng.gen::<f64>() < (-e).exp()
    };
    if exited {
        (-b, true)
    } else {
        (db, false)
    }
}

/// Runs one path from `start` until `B` exits `(0, ∞)` or the visitor stops.
pub fn simulate<R: Rng, V: PathVisitor>(
    geometry: &Geometry,
    cfg: &PathConfig,
    start: State,
    rng: &mut R,
    visitor: &mut V,
) -> Result<PathEnd> {
    let d = geometry.horizontal_dim();
    let levy = cfg.levy_area && !matches!(geometry, Geometry::Torus { .. });
    let mut state = start;
    let (mut t, mut b, mut log_fk, mut increment_sq) = (0.0, cfg.y0, 0.0, 0.0);
    let mut dbeta = [0.0; 3];
    for index in 0..cfg.max_steps {
        let h = cfg.step_size(b);
        for v in dbeta.iter_mut().take(d) {
            *v = gaussian_increment(rng, h);
        }
        let (db, exited) = b_step(rng, b, h);
        let b_new = b + db;
        let keep_going = visitor.step(&StepView { index, t, h, state: &state, b, dbeta: &dbeta[..d], db, log_fk });
        increment_sq += dbeta[..d].iter().map(|v| v * v).sum::<f64>() / (2.0 * h * d as f64);
        advance(geometry, &mut state, &dbeta[..d], h, levy, rng);
        log_fk += cfg.potential * h;
        t += h;
        b = b_new;
        if exited || !keep_going {
            return Ok(PathEnd { tau: t, state, steps: index + 1, log_fk, exited, increment_sq });
        }
    }
    Err(Error::Truncated { max_steps: cfg.max_steps, survivors: 1, paths: 1 })
}

/// A path ending at `end`: `B` runs forward to its hitting time, then the
/// horizontal walk runs backward from `end` over the same steps and the
/// visitor replays everything in forward order. Each step multiplies by an
/// increment with a symmetric law and Haar measure is bi-invariant, so with
/// `end` distributed by Haar measure the replayed chain has the law of the
/// forward chain started from Haar measure.
pub fn simulate_reversed<R: Rng, V: PathVisitor>(
    geometry: &Geometry,
    cfg: &PathConfig,
    end: State,
    rng: &mut R,
    visitor: &mut V,
) -> Result<PathEnd> {
    let d = geometry.horizontal_dim();
    let levy = cfg.levy_area && !matches!(geometry, Geometry::Torus { .. });
    // (h, B before the step, ΔB)
    let mut steps: Vec<(f64, f64, f64)> = Vec::new();
    let mut b = cfg.y0;
    loop {
        if steps.len() == cfg.max_steps {
            return Err(Error::Truncated { max_steps: cfg.max_steps, survivors: 1, paths: 1 });
        }
        let h = cfg.step_size(b);
        let (db, exited) = b_step(rng, b, h);
        steps.push((h, b, db));
        b += db;
        if exited {
            break;
        }
    }
    let n = steps.len();
    let mut states = vec![end; n + 1];
    let mut dbetas = vec![[0.0; 3]; n];
    let mut state = end;
    for k in (0..n).rev() {
        let h = steps[k].0;
        let mut back = [0.0; 3];
        for v in back.iter_mut().take(d) {
            *v = gaussian_increment(rng, h);
        }
        advance(geometry, &mut state, &back[..d], h, levy, rng);
        states[k] = state;
        for i in 0..d {
            dbetas[k][i] = -back[i];
        }
    }
    let (mut t, mut log_fk, mut increment_sq) = (0.0, 0.0, 0.0);
    for (k, &(h, b, db)) in steps.iter().enumerate() {
        let dbeta = &dbetas[k][..d];
        let keep_going = visitor.step(&StepView { index: k, t, h, state: &states[k], b, dbeta, db, log_fk });
        increment_sq += dbeta.iter().map(|v| v * v).sum::<f64>() / (2.0 * h * d as f64);
        log_fk += cfg.potential * h;
        t += h;
        if !keep_going || k + 1 == n {
            return Ok(PathEnd { tau: t, state: states[k + 1], steps: k + 1, log_fk, exited: k + 1 == n, increment_sq });
        }
    }
    unreachable!("a B path has at least one step")
}

/// Samples from `start` and simulates forward, or backward for exit laws.
/// Returns the path end and the weight `dμ/dq`.
pub fn simulate_from<R: Rng, V: PathVisitor>(
    geometry: &Geometry,
    cfg: &PathConfig,
    start: &StartLaw,
    rng: &mut R,
    visitor: &mut V,
) -> Result<(PathEnd, f64)> {
    let (y, weight) = start.sample(geometry, rng);
    let end = if start.is_reversed() { simulate_reversed(geometry, cfg, y, rng, visitor)? } else { simulate(geometry, cfg, y, rng, visitor)? };
    Ok((end, weight))
}

/// A fully recorded path.
#[derive(Debug, Clone)]
pub struct MartingalePath {
    pub geometry: Geometry,
    pub config: PathConfig,
    pub seed: u64,
    pub index: u64,
    /// `Y` before each step, followed by `Y_τ`.
    pub states: Vec<State>,
    /// `B` before each step, followed by `B_τ = 0`.
    pub b: Vec<f64>,
    pub times: Vec<f64>,
    pub dbeta: Vec<Vec<f64>>,
    pub db: Vec<f64>,
    /// `e^{∫_0^t V}` before each step, followed by its value at `τ`.
    pub fk: Vec<f64>,
    pub tau: f64,
}

struct Recorder {
    states: Vec<State>,
    b: Vec<f64>,
    times: Vec<f64>,
    dbeta: Vec<Vec<f64>>,
    db: Vec<f64>,
    fk: Vec<f64>,
}

impl PathVisitor for Recorder {
    fn step(&mut self, v: &StepView) -> bool {
        self.states.push(*v.state);
        self.b.push(v.b);
        self.times.push(v.t);
        self.dbeta.push(v.dbeta.to_vec());
        self.db.push(v.db);
        self.fk.push(v.log_fk.exp());
        true
    }
}

/// Simulates and records path `index` of the ensemble with master seed `seed`.
pub fn sample_path(geometry: &Geometry, cfg: &PathConfig, start: &StartLaw, seed: u64, index: u64) -> Result<MartingalePath> {
    cfg.validate()?;
    start.validate(geometry)?;
    let mut rng = path_rng(seed, index);
    let mut rec = Recorder { states: vec![], b: vec![], times: vec![], dbeta: vec![], db: vec![], fk: vec![] };
    let (end, _) = simulate_from(geometry, cfg, start, &mut rng, &mut rec)?;
    rec.states.push(end.state);
    rec.b.push(0.0);
    rec.times.push(end.tau);
    rec.fk.push(end.log_fk.exp());
    Ok(MartingalePath {
        geometry: geometry.clone(),
        config: *cfg,
        seed,
        index,
        states: rec.states,
        b: rec.b,
        times: rec.times,
        dbeta: rec.dbeta,
        db: rec.db,
        fk: rec.fk,
        tau: end.tau,
    })
}

/// `Q f`, its horizontal derivatives and `∂_y Q f` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: Complex64,
    pub grad: [Complex64; 3],
    pub dy: Complex64,
}

#[derive(Debug, Clone)]
enum Term {
    Torus { k: [f64; 3] },
    Heisenberg { lambda: f64, k: u32 },
    Su2 { n: i64, k: u32 },
}

/// Pointwise evaluator of the Poisson extension
/// `Q f(x, y) = Σ c_m Φ̂_m(x) e^{−y√ν̃_m}` and its first derivatives.
#[derive(Debug, Clone)]
pub struct QEvaluator {
    pub geometry: Geometry,
    terms: Vec<(Term, Complex64, f64)>,
}

impl QEvaluator {
    /// `f` in normalized-basis coefficients; `potential` is the constant `V`.
    pub fn new(basis: &Basis, f: &SpectralCoefficients, potential: f64) -> Result<Self> {
        if !(potential <= 0.0) {
            return Err(Error::Contract(format!("potential must be <= 0, got {potential}")));
        }
        let mut terms = Vec::new();
        for (m, c) in f.iter() {
            let scale = *c / basis.norm(m)?;
            let root = (m.eigenvalue() - potential).sqrt();
            let term = match m {
                ModeIndex::Torus(k) => {
                    let mut kk = [0.0; 3];
                    for (dst, &src) in kk.iter_mut().zip(k) {
                        *dst = src as f64;
                    }
                    Term::Torus { k: kk }
                }
                ModeIndex::Heisenberg { lambda, k } => Term::Heisenberg { lambda: *lambda as f64, k: *k },
                ModeIndex::Su2 { n, k } => Term::Su2 { n: *n, k: *k },
            };
            terms.push((term, scale, root));
        }
        Ok(Self { geometry: basis.model.geometry.clone(), terms })
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn jet(&self, state: &State, y: f64) -> Jet {
        let mut out = Jet::default();
        for (term, scale, root) in &self.terms {
            let decay = *scale * (-y * root).exp();
            let (v, g) = mode_jet(term, state);
            out.value += decay * v;
            out.dy -= decay * v * *root;
            for i in 0..3 {
                out.grad[i] += decay * g[i];
            }
        }
        out
    }

    /// `f(x) = Q f(x, 0)`.
    pub fn value(&self, state: &State) -> Complex64 {
        self.jet(state, 0.0).value
    }
}

fn i_times(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

/// Value and horizontal derivatives of one unnormalized eigenfunction.
fn mode_jet(term: &Term, state: &State) -> (Complex64, [Complex64; 3]) {
    let zero = Complex64::new(0.0, 0.0);
    match (term, state) {
        (Term::Torus { k }, State::Flat(p)) => {
            let (sin, cos) = libm::sincos(k[0] * p[0] + k[1] * p[1] + k[2] * p[2]);
            let v = Complex64::new(cos, sin);
            (v, [i_times(v) * k[0], i_times(v) * k[1], i_times(v) * k[2]])
        }
        (Term::Heisenberg { lambda, k }, State::Flat(p)) => {
            let (x, y, z) = (p[0], p[1], p[2]);
            let l = lambda.abs();
            let r2 = x * x + y * y;
            let e = (-0.25 * l * r2).exp();
            let lag = laguerre(*k, 0.0, 0.5 * l * r2);
            let phi = lag * e;
            // derivative with respect to r²
            let phi_s = 0.5 * l * laguerre_derivative(*k, 0.0, 0.5 * l * r2) * e - 0.25 * l * phi;
            let (sin, cos) = libm::sincos(-lambda * z);
            let phase = Complex64::new(cos, sin);
            let gx = Complex64::new(2.0 * x * phi_s, 0.5 * lambda * y * phi) * phase;
            let gy = Complex64::new(2.0 * y * phi_s, -0.5 * lambda * x * phi) * phase;
            (phase * phi, [gx, gy, zero])
        }
        (Term::Su2 { n, k }, State::Group(g)) => {
            let (a, b) = (g.a, g.b);
            let m = n.unsigned_abs() as i32;
            let s = 2.0 * a.norm_sqr() - 1.0;
            let p = jacobi(*k, 0.0, m as f64, s);
            let dp = jacobi_derivative(*k, 0.0, m as f64, s);
            // Φ = a^n P(2|a|² − 1), or ā^{|n|} P for n < 0
            let base = if *n >= 0 { a } else { a.conj() };
            let pow = |e: i32| if e <= 0 { Complex64::new(1.0, 0.0) } else { base.powi(e) };
            let value = pow(m) * p;
            let deriv = |da: Complex64| {
                let dbase = if *n >= 0 { da } else { da.conj() };
                let d_abs2 = 2.0 * (a.conj() * da).re;
                pow(m - 1) * dbase * (m as f64) * p + pow(m) * dp * 2.0 * d_abs2
            };
            // X moves a by −b, Y by ib
            (value, [deriv(-b), deriv(i_times(b)), zero])
        }
        _ => unreachable!("state kind matches geometry"),
    }
}

/// Pointwise image `Σ w_j F_j f` of a coefficient map under horizontal
/// fields, e.g. `W f` with weights `(1, i)`.
#[derive(Debug, Clone)]
pub struct FieldImage {
    pub q: QEvaluator,
    pub weights: [Complex64; 3],
}

impl FieldImage {
    pub fn value(&self, state: &State) -> Complex64 {
        let j = self.q.jet(state, 0.0);
        (0..3).map(|i| self.weights[i] * j.grad[i]).sum()
    }
}

/// A function evaluated at `Y_τ`.
#[derive(Debug, Clone)]
pub enum Observable {
    Spectral(QEvaluator),
    Field(FieldImage),
}

impl Observable {
    pub fn value(&self, state: &State) -> Complex64 {
        match self {
            Observable::Spectral(q) => q.value(state),
            Observable::Field(f) => f.value(state),
        }
    }
}

/// `A u` with `u = (∇Q, ∂_y Q)`.
fn apply_matrix(spec: &TransformSpec, jet: &Jet) -> [Complex64; 4] {
    let d = spec.dim();
    let u = |l: usize| if l < d { jet.grad[l] } else { jet.dy };
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (k, o) in out.iter_mut().enumerate().take(d + 1) {
        for l in 0..=d {
            let a = spec.matrix.get(k, l);
            if a.re != 0.0 || a.im != 0.0 {
                *o += a * u(l);
            }
        }
    }
    out
}

/// `(A u) · ΔW` with `ΔW = (Δβ, ΔB)`.
fn pair_increment(au: &[Complex64; 4], dbeta: &[f64], db: f64) -> Complex64 {
    let d = dbeta.len();
    let mut total = au[d] * db;
    for k in 0..d {
        total += au[k] * dbeta[k];
    }
    total
}

/// `Σ_kl s_kl ∂_k ∂_l Q` for a symmetric `s`, on the fields that commute
/// (torus directions and `∂_y` everywhere).
fn second_order(q: &QEvaluator, s: &[[Complex64; 4]; 4], d: usize, state: &State, y: f64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (term, scale, root) in &q.terms {
        let decay = *scale * (-y * root).exp();
        let (v, g) = mode_jet(term, state);
        let mut h = s[d][d] * v * (*root * *root);
        for j in 0..d {
            h -= (s[j][d] + s[d][j]) * g[j] * *root;
            if let Term::Torus { k } = term {
                for l in 0..d {
                    h -= s[j][l] * v * (k[j] * k[l]);
                }
            }
        }
        total += decay * h;
    }
    total
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Left,
    /// Trapezoid rule minus `h` times the averaged Itô–Stratonovich drift,
    /// which is absent when `sym` is `None`.
    Trapezoid { sym: Option<[[Complex64; 4]; 4]> },
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    dbeta: [f64; 3],
    db: f64,
    h: f64,
}

/// Streaming evaluation of
/// `e^{∫_0^τ V} ∫_0^τ e^{−∫_0^s V} A(∇, ∂_y)ᵀ Q^V f (dβ, dB)`.
///
/// With `u_k = A(∇, ∂_y)ᵀ Q` at step `k` and `D = Σ a_kl ∂_k ∂_l Q`,
/// `J_{k+1} = e^{V h_k}(J_k + ½(u_k·ΔW_k − h_k D_k)) + ½(u_{k+1}·ΔW_k − h_k D_{k+1})`.
/// This is the trapezoid rule for the Stratonovich integral shifted back to
/// the Itô one; its bias is second order in the step where the left rule's is
/// first order. `D` vanishes when `A + Aᵀ = 0`. Off the torus a horizontal
/// block makes `D` involve non-commuting fields, and the left rule is used.
/// Call [`ItoIntegrator::finish`] with the end state after [`simulate`].
pub struct ItoIntegrator<'a> {
    pub spec: &'a TransformSpec,
    pub q: &'a QEvaluator,
    pub value: Complex64,
    pub failed_at: Option<usize>,
    potential: f64,
    rule: Rule,
    pending: Option<Pending>,
    b_next: f64,
    steps: usize,
}

impl<'a> ItoIntegrator<'a> {
    pub fn new(spec: &'a TransformSpec, q: &'a QEvaluator, potential: f64) -> Self {
        let rule = if !matches!(q.geometry, Geometry::Torus { .. }) && spec.has_horizontal_block() {
            Rule::Left
        } else if spec.is_orthogonal() {
            Rule::Trapezoid { sym: None }
        } else {
            let n = spec.dim() + 1;
            let mut s = [[Complex64::new(0.0, 0.0); 4]; 4];
            for (k, row) in s.iter_mut().enumerate().take(n) {
                for (l, e) in row.iter_mut().enumerate().take(n) {
                    *e = 0.5 * (spec.matrix.get(k, l) + spec.matrix.get(l, k));
                }
            }
            Rule::Trapezoid { sym: Some(s) }
        };
        Self { spec, q, value: Complex64::new(0.0, 0.0), failed_at: None, potential, rule, pending: None, b_next: 0.0, steps: 0 }
    }

    fn drift(&self, state: &State, y: f64) -> Complex64 {
        match self.rule {
            Rule::Trapezoid { sym: Some(s) } => second_order(self.q, &s, self.spec.dim(), state, y),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    fn close(&mut self, au: &[Complex64; 4], drift: Complex64) {
        if let Some(p) = self.pending.take() {
            let d = self.spec.dim();
            self.value += 0.5 * (pair_increment(au, &p.dbeta[..d], p.db) - drift * p.h);
        }
    }

    /// Closes the last step at `Y_τ` (with `B_τ` as tracked from the
    /// increments). Returns `false` if the integrand is not finite there.
    pub fn finish(&mut self, end: &State) -> bool {
        if self.pending.is_none() || self.failed_at.is_some() {
            return self.failed_at.is_none();
        }
        let au = apply_matrix(self.spec, &self.q.jet(end, self.b_next));
        let drift = self.drift(end, self.b_next);
        self.close(&au, drift);
        if !(self.value.re.is_finite() && self.value.im.is_finite()) {
            self.failed_at = Some(self.steps);
            return false;
        }
        true
    }
}

impl PathVisitor for ItoIntegrator<'_> {
    fn step(&mut self, v: &StepView) -> bool {
        let au = apply_matrix(self.spec, &self.q.jet(v.state, v.b));
        let inc = pair_increment(&au, v.dbeta, v.db);
        if !(inc.re.is_finite() && inc.im.is_finite()) {
            self.failed_at = Some(v.index);
            return false;
        }
        let growth = if self.potential == 0.0 { 1.0 } else { (self.potential * v.h).exp() };
        match self.rule {
            Rule::Left => self.value = (self.value + inc) * growth,
            Rule::Trapezoid { .. } => {
                let drift = self.drift(v.state, v.b);
                self.close(&au, drift);
                self.value = (self.value + 0.5 * (inc - drift * v.h)) * growth;
                let mut dbeta = [0.0; 3];
                dbeta[..v.dbeta.len()].copy_from_slice(v.dbeta);
                self.pending = Some(Pending { dbeta, db: v.db, h: v.h });
            }
        }
        self.b_next = v.b + v.db;
        self.steps = v.index + 1;
        true
    }
}

/// The transform integral along a recorded path, by the same rule as
/// [`ItoIntegrator`].
pub fn ito_transform_integral(path: &MartingalePath, spec: &TransformSpec, q: &QEvaluator) -> Result<Complex64> {
    if spec.dim() != path.geometry.horizontal_dim() {
        return Err(Error::Contract("transform matrix does not match the path geometry".into()));
    }
    let mut ito = ItoIntegrator::new(spec, q, path.config.potential);
    let mut log_fk = 0.0;
    for k in 0..path.db.len() {
        let h = path.times[k + 1] - path.times[k];
        let view = StepView {
            index: k,
            t: path.times[k],
            h,
            state: &path.states[k],
            b: path.b[k],
            dbeta: &path.dbeta[k],
            db: path.db[k],
            log_fk,
        };
        if !ito.step(&view) {
            return Err(Error::NonFinite(format!("integrand at step {k}, t = {}", path.times[k])));
        }
        log_fk = path.fk[k + 1].ln();
    }
    let last = path.states.len() - 1;
    if !ito.finish(&path.states[last]) {
        return Err(Error::NonFinite(format!("integrand at Y_τ, t = {}", path.tau)));
    }
    Ok(ito.value)
}

/// Summary statistics of exit times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl TauStats {
    pub fn from_samples(taus: &[f64]) -> Self {
        if taus.is_empty() {
            return Self { mean: 0.0, median: 0.0, p90: 0.0, max: 0.0 };
        }
        let mut s = taus.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        let q = |p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        Self { mean: pairwise_sum(&s) / s.len() as f64, median: q(0.5), p90: q(0.9), max: s[s.len() - 1] }
    }
}

/// Ensemble summary `{n_paths, mean, se, tau_stats}` plus the empirical
/// increment-variance ratio (1 for variance-`2h` increments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub mean: [f64; 2],
    pub se: [f64; 2],
    pub tau_stats: TauStats,
    pub increment_variance_ratio: f64,
    pub mean_steps: f64,
}

/// Per-path output of a transform ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub end: PathEnd,
    /// `dμ/dq` of the start point.
    pub weight: f64,
    pub ito: Complex64,
}

/// Runs `n_paths` paths and evaluates the Itô transform integral on each.
/// Paths that exhaust `max_steps` produce a [`Error::Truncated`] carrying the
/// number of survivors.
#[allow(clippy::too_many_arguments)]
pub fn run_transform_ensemble<E: Executor>(
    exec: &E,
    geometry: &Geometry,
    cfg: &PathConfig,
    start: &StartLaw,
    spec: &TransformSpec,
    q: &QEvaluator,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    cfg.validate()?;
    start.validate(geometry)?;
    if spec.dim() != geometry.horizontal_dim() {
        return Err(Error::Contract("transform matrix does not match the geometry".into()));
    }
    if (spec.potential - cfg.potential).abs() > 0.0 {
        return Err(Error::Contract("transform and path potentials differ".into()));
    }
    let results = exec.map_indexed(n_paths, |i| -> Result<PathSample> {
        let mut rng = path_rng(seed, i as u64);
        let mut ito = ItoIntegrator::new(spec, q, cfg.potential);
        let (end, weight) = simulate_from(geometry, cfg, start, &mut rng, &mut ito)?;
        ito.finish(&end.state);
        if let Some(k) = ito.failed_at {
            return Err(Error::NonFinite(format!("integrand on path {i} at step {k}")));
        }
        Ok(PathSample { end, weight, ito: ito.value })
    });
    let mut out = Vec::with_capacity(n_paths);
    let mut survivors = 0;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => out.push(s),
            Err(Error::Truncated { .. }) => survivors += 1,
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    if survivors > 0 {
        return Err(Error::Truncated { max_steps: cfg.max_steps, survivors, paths: n_paths });
    }
    Ok(out)
}

/// Summary of `values` (one complex number per path) with exit statistics.
pub fn summarize(samples: &[PathSample], values: &[Complex64]) -> EnsembleSummary {
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let (mr, sr) = mean_se(&re);
    let (mi, si) = mean_se(&im);
    let taus: Vec<f64> = samples.iter().map(|s| s.end.tau).collect();
    let inc: Vec<f64> = samples.iter().map(|s| s.end.increment_sq).collect();
    let steps: Vec<f64> = samples.iter().map(|s| s.end.steps as f64).collect();
    let total_steps = pairwise_sum(&steps);
    EnsembleSummary {
        n_paths: samples.len(),
        mean: [mr, mi],
        se: [sr, si],
        tau_stats: TauStats::from_samples(&taus),
        increment_variance_ratio: if total_steps > 0.0 { pairwise_sum(&inc) / total_steps } else { 0.0 },
        mean_steps: if samples.is_empty() { 0.0 } else { total_steps / samples.len() as f64 },
    }
}

/// Mean of `M_t = e^{∫_0^{t∧τ} V} Q^V f(Y_{t∧τ}, B_{t∧τ})` at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub mean: [f64; 2],
    pub se: [f64; 2],
    /// `|mean − M_0| / se` (complex, combined).
    pub z_score: f64,
    /// `E|M_t − M_0|²`.
    pub increment_second_moment: f64,
    /// `E ∫_0^{t∧τ} 2 e^{2∫V} (|∂_y Q|² + Σ|X_i Q|²) ds`.
    pub quadratic_variation: f64,
    /// Ratio of the two lines above; 1 for the variance-2 convention.
    pub qv_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub n_paths: usize,
    pub y0: f64,
    pub potential: f64,
    /// `M_0` averaged over starts.
    pub start_mean: [f64; 2],
    pub checkpoints: Vec<Checkpoint>,
    pub max_z: f64,
}

pub const MIN_DIAGNOSTIC_PATHS: usize = 1000;

struct CheckpointVisitor<'a> {
    q: &'a QEvaluator,
    steps: &'a [usize],
    next: usize,
    values: Vec<Complex64>,
    qv: Vec<f64>,
    qv_acc: f64,
}

impl PathVisitor for CheckpointVisitor<'_> {
    fn step(&mut self, v: &StepView) -> bool {
        let jet = self.q.jet(v.state, v.b);
        let w = v.log_fk.exp();
        if self.next < self.steps.len() && v.index == self.steps[self.next] {
            self.values.push(jet.value * w);
            self.qv.push(self.qv_acc);
            self.next += 1;
            if self.next == self.steps.len() {
                return false;
            }
        }
        let sq: f64 = jet.grad.iter().map(|g| g.norm_sqr()).sum::<f64>() + jet.dy.norm_sqr();
        self.qv_acc += 2.0 * w * w * sq * v.h;
        true
    }
}

/// Checks that `E[M_t]` stays at `E[M_0]` across `checkpoints` (times), with
/// fixed steps of length `cfg.dt`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_diagnostic<E: Executor>(
    exec: &E,
    geometry: &Geometry,
    q: &QEvaluator,
    cfg: &PathConfig,
    start: &StartLaw,
    checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    if n_paths < MIN_DIAGNOSTIC_PATHS {
        return Err(Error::Contract(format!("martingale diagnostics need at least {MIN_DIAGNOSTIC_PATHS} paths, got {n_paths}")));
    }
    if q.is_empty() {
        return Err(Error::Contract("diagnostic needs a nonzero, zero-mode-free function".into()));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints[0] <= 0.0 {
        return Err(Error::Contract("checkpoints must be positive and increasing".into()));
    }
    let mut fixed = *cfg;
    fixed.coarsen = None;
    fixed.validate()?;
    start.validate(geometry)?;
    if start.is_reversed() {
        return Err(Error::Contract("martingale checkpoints need a forward start law, not an exit law".into()));
    }
    let steps: Vec<usize> = checkpoints.iter().map(|t| (t / fixed.dt).round() as usize).collect();
    let per_path = exec.map_indexed(n_paths, |i| -> Result<(Complex64, Vec<Complex64>, Vec<f64>)> {
        let mut rng = path_rng(seed, i as u64);
        let (y, _) = start.sample(geometry, &mut rng);
        let m0 = q.jet(&y, fixed.y0).value;
        let mut vis = CheckpointVisitor {
            q,
            steps: &steps,
            next: 0,
            values: Vec::new(),
            qv: Vec::new(),
            qv_acc: 0.0,
        };
        let end = simulate(geometry, &fixed, y, &mut rng, &mut vis)?;
        if end.exited {
            // stopped martingale: the value at τ persists
            let m_tau = q.jet(&end.state, 0.0).value * end.log_fk.exp();
            while vis.values.len() < steps.len() {
                vis.values.push(m_tau);
                vis.qv.push(vis.qv_acc);
            }
        }
        Ok((m0, vis.values, vis.qv))
    });
    let mut rows = Vec::with_capacity(n_paths);
    for r in per_path {
        rows.push(r?);
    }
    let m0: Vec<Complex64> = rows.iter().map(|r| r.0).collect();
    let (m0r, _) = mean_se(&m0.iter().map(|v| v.re).collect::<Vec<_>>());
    let (m0i, _) = mean_se(&m0.iter().map(|v| v.im).collect::<Vec<_>>());
    let mut out = Vec::new();
    let mut max_z: f64 = 0.0;
    for (j, &t) in checkpoints.iter().enumerate() {
        let diffs: Vec<Complex64> = rows.iter().map(|r| r.1[j] - r.0).collect();
        let vals: Vec<Complex64> = rows.iter().map(|r| r.1[j]).collect();
        let (mr, sr) = mean_se(&vals.iter().map(|v| v.re).collect::<Vec<_>>());
        let (mi, si) = mean_se(&vals.iter().map(|v| v.im).collect::<Vec<_>>());
        // the change M_t − M_0 has mean zero; its own SE is the right scale
        let (dr, dsr) = mean_se(&diffs.iter().map(|v| v.re).collect::<Vec<_>>());
        let (di, dsi) = mean_se(&diffs.iter().map(|v| v.im).collect::<Vec<_>>());
        let se = (dsr * dsr + dsi * dsi).sqrt();
        let z = if se > 0.0 { (dr * dr + di * di).sqrt() / se } else { 0.0 };
        max_z = max_z.max(z);
        let second: Vec<f64> = diffs.iter().map(|v| v.norm_sqr()).collect();
        let qv: Vec<f64> = rows.iter().map(|r| r.2[j]).collect();
        let (s2, _) = mean_se(&second);
        let (qvm, _) = mean_se(&qv);
        out.push(Checkpoint {
            t,
            mean: [mr, mi],
            se: [sr, si],
            z_score: z,
            increment_second_moment: s2,
            quadratic_variation: qvm,
            qv_ratio: if qvm > 0.0 { s2 / qvm } else { 0.0 },
        });
    }
    Ok(MartingaleReport { n_paths, y0: fixed.y0, potential: fixed.potential, start_mean: [m0r, m0i], checkpoints: out, max_z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use crate::geometry::ModelSpace;
    use crate::spectral::eigenfunction_eval;
    use crate::geometry::{apply_field, Field, Point};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn increments_have_variance_two_h() {
        let mut rng = path_rng(1, 0);
        let h = 0.01;
        let n = 200_000;
        let s: f64 = (0..n).map(|_| gaussian_increment(&mut rng, h).powi(2)).sum();
        let ratio = s / (n as f64 * 2.0 * h);
        // χ² band: sd of the ratio is sqrt(2/n)
        assert!((ratio - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "{ratio}");
    }

    #[test]
    fn zero_potential_keeps_unit_weight() {
        let g = Geometry::torus(1);
        let cfg = PathConfig { y0: 0.5, ..PathConfig::default() };
        let p = sample_path(&g, &cfg, &StartLaw::Haar, 3, 0).unwrap();
        assert!(p.fk.iter().all(|&w| w == 1.0));
        assert!(p.b[..p.b.len() - 1].iter().all(|&b| b > 0.0));
        assert_eq!(*p.b.last().unwrap(), 0.0);
        let cfg = PathConfig { y0: 0.5, potential: -1.0, ..PathConfig::default() };
        let p = sample_path(&g, &cfg, &StartLaw::Haar, 3, 0).unwrap();
        assert!(p.fk.iter().all(|&w| w > 0.0 && w <= 1.0));
        assert!((p.fk.last().unwrap() - (-p.tau).exp()).abs() < 1e-9);
    }

    #[test]
    fn truncation_reports_survivors() {
        let g = Geometry::torus(1);
        let cfg = PathConfig { y0: 4.0, max_steps: 10, ..PathConfig::default() };
        let err = sample_path(&g, &cfg, &StartLaw::Haar, 3, 0).unwrap_err();
        assert!(matches!(err, Error::Truncated { max_steps: 10, .. }));
    }

    #[test]
    fn su2_paths_stay_on_the_group() {
        let g = Geometry::su2();
        let cfg = PathConfig { y0: 1.0, dt: 1e-2, ..PathConfig::default() };
        let p = sample_path(&g, &cfg, &StartLaw::Haar, 9, 4).unwrap();
        for s in &p.states {
            let State::Group(el) = s else { panic!() };
            assert!(el.unitarity_defect() < 1e-8);
            assert!((el.det() - c(1.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn heisenberg_vertical_variance_matches_levy_area() {
        // from the origin, Var(z_t) = t² for variance-2 increments, for fine
        // and single coarse steps alike
        let g = Geometry::heisenberg();
        for dt in [0.01, 1.0] {
            let n = 20_000;
            let mut zs = Vec::new();
            let mut xs = Vec::new();
            for i in 0..n {
                let mut rng = path_rng(5, i);
                let cfg = PathConfig { y0: 1e6, dt, coarsen: None, ..PathConfig::default() };
                let mut stop = StopAt { steps: (1.0 / dt).round() as usize };
                let end = simulate(&g, &cfg, State::Flat([0.0; 3]), &mut rng, &mut stop).unwrap();
                let State::Flat(p) = end.state else { panic!() };
                zs.push(p[2]);
                xs.push(p[0]);
            }
            let (mz, sz) = mean_se(&zs);
            assert!(mz.abs() < 4.0 * sz);
            let var_z = zs.iter().map(|z| z * z).sum::<f64>() / n as f64;
            let var_x = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!((var_x - 2.0).abs() < 0.08, "dt={dt} var x {var_x}");
            // fourth moment of z is O(1); 0.1 is several standard errors
            assert!((var_z - 1.0).abs() < 0.1, "dt={dt} var z {var_z}");
        }
    }

    struct StopAt {
        steps: usize,
    }

    impl PathVisitor for StopAt {
        fn step(&mut self, v: &StepView) -> bool {
            v.index + 1 < self.steps
        }
    }

    /// P(τ > t) = erf(y0 / (2√t)) for variance-2 Brownian motion from y0.
    #[test]
    fn exit_time_law_with_bridge_correction() {
        let g = Geometry::torus(1);
        let y0 = 1.0;
        let cfg = PathConfig { y0, dt: 1e-2, coarsen: None, ..PathConfig::default() };
        let n = 20_000;
        let t_cap = 4.0;
        let mut survive = 0usize;
        let mut capped = Vec::new();
        for i in 0..n {
            let mut rng = path_rng(11, i);
            let mut stop = StopAt { steps: (t_cap / cfg.dt).round() as usize };
            let end = simulate(&g, &cfg, State::Flat([0.0; 3]), &mut rng, &mut stop).unwrap();
            if !end.exited {
                survive += 1;
            }
            capped.push(end.tau.min(t_cap));
        }
        let p = survive as f64 / n as f64;
        let oracle = libm::erf(y0 / (2.0 * t_cap.sqrt()));
        let se = (oracle * (1.0 - oracle) / n as f64).sqrt();
        assert!((p - oracle).abs() < 3.5 * se, "survival {p} vs {oracle}");
        // E[τ ∧ T] = ∫_0^T erf(y0 / 2√s) ds, by quadrature
        let (m, se_m) = mean_se(&capped);
        let (want, _) = crate::quad::integrate(|s| if s == 0.0 { 1.0 } else { libm::erf(y0 / (2.0 * s.sqrt())) }, 0.0, t_cap, Default::default()).unwrap();
        assert!((m - want).abs() < 3.5 * se_m, "{m} vs {want}");
    }

    #[test]
    fn evaluator_matches_grid_eigenfunctions_and_fields() {
        for geometry in [Geometry::heisenberg(), Geometry::su2()] {
            let model = ModelSpace::with_defaults(geometry.clone()).unwrap();
            let basis = Basis::new(&model);
            let modes: Vec<ModeIndex> = match geometry {
                Geometry::Heisenberg { .. } => vec![ModeIndex::Heisenberg { lambda: 2, k: 3 }, ModeIndex::Heisenberg { lambda: -1, k: 1 }],
                _ => vec![ModeIndex::Su2 { n: 3, k: 2 }, ModeIndex::Su2 { n: -2, k: 1 }],
            };
            for m in modes {
                let f = SpectralCoefficients::from_pairs(geometry.clone(), &[(m.clone(), c(1.0, 0.0))]).unwrap();
                let q = QEvaluator::new(&basis, &f, 0.0).unwrap();
                let norm = basis.norm(&m).unwrap();
                let pts: Vec<Point> = match geometry {
                    Geometry::Heisenberg { .. } => vec![Point::new(&[0.4, -1.1, 2.0]), Point::new(&[1.5, 0.3, -0.7])],
                    _ => vec![Point::new(&[0.3, 1.0, 0.5]), Point::new(&[1.2, 4.0, -2.0])],
                };
                for pt in pts {
                    let state = match geometry {
                        Geometry::Su2 { .. } => State::Group(Su2::from_chart(pt.0[0], pt.0[1], pt.0[2])),
                        _ => State::Flat([pt.0[0], pt.0[1], pt.0[2]]),
                    };
                    let jet = q.jet(&state, 0.0);
                    let direct = eigenfunction_eval(&geometry, &m, &pt).unwrap() / norm;
                    assert!((jet.value - direct).norm() < 1e-12);
                    let fun = |p: &Point| eigenfunction_eval(&geometry, &m, p).unwrap() / norm;
                    for (i, field) in [Field::Horizontal(0), Field::Horizontal(1)].into_iter().enumerate() {
                        let fd = apply_field(&model, field, &fun, &pt).unwrap();
                        assert!((jet.grad[i] - fd).norm() < 1e-6, "{geometry:?} {m:?} {field:?}");
                    }
                    let yj = q.jet(&state, 0.7);
                    assert!((yj.dy + yj.value * m.eigenvalue().sqrt()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ito_integral_of_zero_data_vanishes() {
        let g = Geometry::Torus { dim: 1, k_max: 16 };
        let model = ModelSpace::with_defaults(g.clone()).unwrap();
        let basis = Basis::new(&model);
        let cfg = PathConfig { y0: 1.0, ..PathConfig::default() };
        let path = sample_path(&g, &cfg, &StartLaw::Haar, 1, 2).unwrap();
        let zero = QEvaluator::new(&basis, &SpectralCoefficients::new(g.clone()), 0.0).unwrap();
        let spec = TransformSpec::riesz_axis(1, 0).unwrap();
        assert_eq!(ito_transform_integral(&path, &spec, &zero).unwrap(), c(0.0, 0.0));
        let f = SpectralCoefficients::from_pairs(g, &[(ModeIndex::Torus(vec![1]), c(1.0, 0.0))]).unwrap();
        let q = QEvaluator::new(&basis, &f, 0.0).unwrap();
        let zero_spec = TransformSpec::new(crate::hermitian::CMatrix::zeros(2), 0.0).unwrap();
        assert_eq!(ito_transform_integral(&path, &zero_spec, &q).unwrap(), c(0.0, 0.0));
        // the streaming and recorded evaluations agree
        let mut rng = path_rng(1, 2);
        let (y, _) = StartLaw::Haar.sample(&path.geometry, &mut rng);
        let mut vis = ItoIntegrator::new(&spec, &q, 0.0);
        let end = simulate(&path.geometry, &cfg, y, &mut rng, &mut vis).unwrap();
        assert!(vis.finish(&end.state));
        assert_eq!(vis.value, ito_transform_integral(&path, &spec, &q).unwrap());
    }

    #[test]
    fn corrected_trapezoid_integral_has_mean_zero() {
        // A = diag(1, 0) is not antisymmetric: without the drift term the
        // trapezoid rule converges to the Stratonovich integral, whose mean
        // E ∫ ∂_x² Q dt is far from 0 for a start at the crest of cos x.
        let g = Geometry::torus(1);
        let model = ModelSpace::with_defaults(g.clone()).unwrap();
        let basis = Basis::new(&model);
        let f = SpectralCoefficients::from_pairs(g.clone(), &[(ModeIndex::Torus(vec![1]), c(0.5, 0.0)), (ModeIndex::Torus(vec![-1]), c(0.5, 0.0))]).unwrap();
        let q = QEvaluator::new(&basis, &f, 0.0).unwrap();
        let mut m = crate::hermitian::CMatrix::zeros(2);
        m.set(0, 0, c(1.0, 0.0));
        let spec = TransformSpec::new(m, 0.0).unwrap();
        let cfg = PathConfig { y0: 1.0, ..PathConfig::default() };
        let start = StartLaw::Fixed { point: [0.0; 3] };
        let samples = run_transform_ensemble(&Serial, &g, &cfg, &start, &spec, &q, 4000, 9).unwrap();
        let re: Vec<f64> = samples.iter().map(|s| s.ito.re).collect();
        let (mean, se) = mean_se(&re);
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
        // the drift the correction removes is much larger than the noise
        let strat: Vec<f64> = (0..400)
            .map(|i| {
                let mut rng = path_rng(9, i);
                let (y, _) = start.sample(&g, &mut rng);
                let mut acc = 0.0;
                let mut vis = DriftAccumulator { q: &q, acc: &mut acc };
                simulate(&g, &cfg, y, &mut rng, &mut vis).unwrap();
                acc
            })
            .collect();
        let (drift, _) = mean_se(&strat);
        assert!(drift.abs() > 20.0 * se, "drift {drift} se {se}");
    }

    /// `∫ ∂_x² Q dt` along the path.
    struct DriftAccumulator<'a> {
        q: &'a QEvaluator,
        acc: &'a mut f64,
    }

    impl PathVisitor for DriftAccumulator<'_> {
        fn step(&mut self, v: &StepView) -> bool {
            // ∂_x² of cos-type data is −Q
            *self.acc -= self.q.jet(v.state, v.b).value.re * v.h;
            true
        }
    }

    #[test]
    fn reversed_paths_end_at_the_sampled_point() {
        let g = Geometry::heisenberg();
        let cfg = PathConfig { y0: 0.5, ..PathConfig::default() };
        let start = StartLaw::HeisenbergExit { sigma: 2.0 };
        start.validate(&g).unwrap();
        assert!(StartLaw::HeisenbergExit { sigma: 2.0 }.validate(&Geometry::torus(1)).is_err());
        for i in 0..5 {
            let path = sample_path(&g, &cfg, &start, 4, i).unwrap();
            let mut rng = path_rng(4, i);
            let (end, _) = start.sample(&g, &mut rng);
            assert_eq!(*path.states.last().unwrap(), end);
            // horizontal displacements are the recorded increments, B reaches 0
            for k in 0..path.db.len() {
                let (State::Flat(a), State::Flat(b)) = (path.states[k], path.states[k + 1]) else { unreachable!() };
                assert!((b[0] - a[0] - path.dbeta[k][0]).abs() < 1e-9 && (b[1] - a[1] - path.dbeta[k][1]).abs() < 1e-9);
                assert!((path.b[k] + path.db[k] - path.b[k + 1]).abs() < 1e-9);
            }
            assert_eq!(path.b[path.db.len()], 0.0);
            assert!(path.b[path.db.len() - 1] + path.db[path.db.len() - 1] == 0.0);
        }
    }

    #[test]
    fn torus_martingale_is_flat_in_time() {
        let g = Geometry::torus(1);
        let model = ModelSpace::with_defaults(g.clone()).unwrap();
        let basis = Basis::new(&model);
        let f = SpectralCoefficients::from_pairs(g.clone(), &[(ModeIndex::Torus(vec![1]), c(0.5, 0.0)), (ModeIndex::Torus(vec![-1]), c(0.5, 0.0))]).unwrap();
        for v in [0.0, -1.0] {
            let q = QEvaluator::new(&basis, &f, v).unwrap();
            let cfg = PathConfig { y0: 3.0, dt: 1e-3, potential: v, ..PathConfig::default() };
            let start = StartLaw::Fixed { point: [0.0; 3] };
            let rep = martingale_diagnostic(&Serial, &g, &q, &cfg, &start, &[0.25, 0.5, 1.0, 2.0, 3.0], 2000, 17).unwrap();
            // M_0 = cos(0) e^{−3√(1 − V)}
            let m0 = (-3.0 * (1.0 - v).sqrt()).exp();
            assert!((rep.start_mean[0] - m0).abs() < 1e-12);
            // the squared increments are heavy-tailed (they carry e^{−4B}), so the
            // ratio band only separates 1 from a factor-2 convention error
            for cp in &rep.checkpoints {
                assert!(cp.z_score < 3.0, "V={v} t={} z={}", cp.t, cp.z_score);
                assert!(cp.qv_ratio > 0.7 && cp.qv_ratio < 1.4, "V={v} t={} ratio {}", cp.t, cp.qv_ratio);
            }
            let last = rep.checkpoints.last().unwrap();
            assert!((last.qv_ratio - 1.0).abs() < 0.15, "V={v} final ratio {}", last.qv_ratio);
        }
    }

    #[test]
    fn diagnostic_contracts() {
        let g = Geometry::torus(1);
        let model = ModelSpace::with_defaults(g.clone()).unwrap();
        let basis = Basis::new(&model);
        let empty = QEvaluator::new(&basis, &SpectralCoefficients::new(g.clone()), 0.0).unwrap();
        let cfg = PathConfig::default();
        let err = martingale_diagnostic(&Serial, &g, &empty, &cfg, &StartLaw::Haar, &[1.0], 2000, 0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let f = SpectralCoefficients::from_pairs(g.clone(), &[(ModeIndex::Torus(vec![1]), c(1.0, 0.0))]).unwrap();
        let q = QEvaluator::new(&basis, &f, 0.0).unwrap();
        let err = martingale_diagnostic(&Serial, &g, &q, &cfg, &StartLaw::Haar, &[1.0], 10, 0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
