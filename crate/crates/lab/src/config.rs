//! Experiment configuration: TOML with defaults, dotted-key overrides and
//! validation errors that name the offending key.

use std::fmt;
use std::path::Path;

use riesz_lab_core::geometry::Geometry;
use riesz_lab_core::hermitian::CMatrix;
use riesz_lab_core::norms::{BoundSuite, SuiteConfig};
use riesz_lab_core::projection::{Bandwidth, Kernel, MIN_PATHS};
use riesz_lab_core::spectral::{check_mode, ModeIndex, SpectralCoefficients};
use riesz_lab_core::stochastic::StartLaw;
use riesz_lab_core::transforms::TransformSpec;
use riesz_lab_core::Complex64;
use serde::{Deserialize, Serialize};

/// A configuration problem, with the dotted key it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { key: key.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `A_i` for `transform.axis`.
    Riesz,
    ComplexGradient,
    /// Explicit `transform.matrix`.
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformBlock {
    pub preset: Option<Preset>,
    #[serde(default)]
    pub axis: usize,
    #[serde(default)]
    pub potential: f64,
    /// Rows of `[re, im]` pairs.
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

impl Default for TransformBlock {
    fn default() -> Self {
        Self { preset: None, axis: 0, potential: 0.0, matrix: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub mode: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionBlock {
    /// Coefficients in the normalized eigenbasis.
    pub terms: Option<Vec<Term>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Pointwise,
    Bilinear,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// `g` given by coefficients.
    Terms { terms: Vec<Term> },
    /// `g = W f` with `W = X + iY`.
    WImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub n_paths: usize,
    pub y0: f64,
    pub dt: f64,
    pub seed: u64,
    /// Number of evaluation points for the pointwise estimator.
    pub points: usize,
    /// Kernel radius; the default depends on the geometry.
    pub bandwidth: Option<f64>,
    pub kernel: Kernel,
    pub estimator: Option<Estimator>,
    pub observable: Option<ObservableSpec>,
    pub start: Option<StartLaw>,
    /// Step growth factor while `B > y0`; `0` keeps every step at `dt`.
    pub coarsen: f64,
    pub max_steps: usize,
}

impl Default for McBlock {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            y0: 4.0,
            dt: 1e-3,
            seed: 1,
            points: 16,
            bandwidth: None,
            kernel: Kernel::Ball,
            estimator: None,
            observable: None,
            start: None,
            coarsen: 0.2,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteBlock {
    /// Bound suite name or `all`; for identity checks, a check name or `all`.
    pub name: String,
    pub ps: Vec<f64>,
    pub n_random: usize,
    pub seed: u64,
    /// Pass tolerance of the bound suites.
    pub tol: f64,
}

impl Default for SuiteBlock {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self { name: "all".into(), ps: s.ps, n_random: s.n_random, seed: s.seed, tol: s.tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Y0,
    Dt,
    NPaths,
    Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceBlock {
    pub axis: AxisName,
    pub values: Vec<f64>,
}

impl Default for ConvergenceBlock {
    fn default() -> Self {
        Self { axis: AxisName::Y0, values: vec![0.25, 0.5, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    /// Poisson times `y` at which the kernel is tabulated.
    pub ys: Vec<f64>,
    pub points: usize,
}

impl Default for KernelBlock {
    fn default() -> Self {
        Self { ys: vec![0.25, 0.5, 1.0, 2.0], points: 64 }
    }
}

/// Per-check tolerances of the identity suite; `None` keeps the built-in one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityBlock {
    pub tol: Option<f64>,
    pub n_random: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub transform: TransformBlock,
    pub function: FunctionBlock,
    pub mc: McBlock,
    pub suite: SuiteBlock,
    pub identity: IdentityBlock,
    pub convergence: ConvergenceBlock,
    pub kernel: KernelBlock,
    pub output: OutputBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::torus(1),
            transform: TransformBlock::default(),
            function: FunctionBlock::default(),
            mc: McBlock::default(),
            suite: SuiteBlock::default(),
            identity: IdentityBlock::default(),
            convergence: ConvergenceBlock::default(),
            kernel: KernelBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

/// Parses TOML text, applies `key=value` overrides (values in TOML syntax,
/// bare words taken as strings) and deserializes with key paths in errors.
pub fn parse(text: &str, overrides: &[String]) -> CResult<ExperimentConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("", e.message()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    fill_block_defaults(&mut table);
    let value = toml::Value::Table(table);
    serde_path_to_error::deserialize(value).map_err(|e| ConfigError::new(e.path().to_string(), e.inner().to_string()))
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> CResult<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse(&text, overrides)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CResult<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::new(spec, "override must look like key=value"))?;
    let key = key.trim();
    let value: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::new(key, format!("{p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Lets a block be partially specified: missing keys of `mc`, `suite`, … take
/// their defaults.
fn fill_block_defaults(table: &mut toml::Table) {
    fn merge<T: Serialize>(table: &mut toml::Table, name: &str, default: T) {
        let Some(toml::Value::Table(given)) = table.get_mut(name) else { return };
        let toml::Value::Table(base) = toml::Value::try_from(default).expect("defaults serialize") else { return };
        for (k, v) in base {
            given.entry(k).or_insert(v);
        }
    }
    merge(table, "mc", McBlock::default());
    merge(table, "suite", SuiteBlock::default());
    merge(table, "convergence", ConvergenceBlock::default());
    merge(table, "kernel", KernelBlock::default());
    merge(table, "output", OutputBlock::default());
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn terms_to_coeffs(geometry: &Geometry, terms: &[Term], key: &str) -> CResult<SpectralCoefficients> {
    let mut co = SpectralCoefficients::new(geometry.clone());
    for (i, t) in terms.iter().enumerate() {
        let k = format!("{key}[{i}]");
        let mode = ModeIndex::from_tuple(geometry, &t.mode).map_err(|e| ConfigError::new(format!("{k}.mode"), e))?;
        check_mode(geometry, &mode).map_err(|e| ConfigError::new(format!("{k}.mode"), e))?;
        if !(t.re.is_finite() && t.im.is_finite()) {
            return Err(ConfigError::new(&k, "coefficients must be finite"));
        }
        co.add_to(mode, c(t.re, t.im)).map_err(|e| ConfigError::new(&k, e))?;
    }
    Ok(co)
}

/// Kernel radius. On `T¹` the smoothing bias `1 − sin h / h` of 0.025 stays
/// inside the 3 SE band at 2·10⁵ paths; the other radii keep the bias of the
/// default functions at a few percent with 2·10⁴ paths.
fn default_bandwidth(geometry: &Geometry) -> f64 {
    match geometry {
        Geometry::Torus { dim: 1, .. } => 0.025,
        Geometry::Torus { dim: 2, .. } => 0.3,
        Geometry::Torus { .. } => 0.6,
        _ => 0.25,
    }
}

fn default_terms(geometry: &Geometry) -> Vec<Term> {
    match geometry {
        Geometry::Torus { dim, .. } => {
            let e = |s: i64| (0..*dim).map(|i| if i == 0 { s } else { 0 }).collect::<Vec<_>>();
            vec![Term { mode: e(1), re: 0.5, im: 0.0 }, Term { mode: e(-1), re: 0.5, im: 0.0 }]
        }
        Geometry::Heisenberg { .. } => vec![Term { mode: vec![-1, 0], re: 1.0, im: 0.0 }],
        Geometry::Su2 { .. } => vec![Term { mode: vec![2, 0], re: 1.0, im: 0.0 }],
    }
}

/// The sine partner of the default torus function.
fn default_observable(geometry: &Geometry) -> ObservableSpec {
    match geometry {
        Geometry::Torus { dim, .. } => {
            let e = |s: i64| (0..*dim).map(|i| if i == 0 { s } else { 0 }).collect::<Vec<_>>();
            ObservableSpec::Terms { terms: vec![Term { mode: e(1), re: 0.0, im: -0.5 }, Term { mode: e(-1), re: 0.0, im: 0.5 }] }
        }
        _ => ObservableSpec::WImage,
    }
}

impl ExperimentConfig {
    /// Fills every geometry-dependent default so the snapshot written to
    /// reports is complete, then validates.
    pub fn materialize(mut self) -> CResult<Self> {
        self.geometry.validate().map_err(|e| ConfigError::new("geometry", e))?;
        let compact = self.geometry.is_compact();
        if self.transform.preset.is_none() {
            self.transform.preset = Some(if self.transform.matrix.is_some() {
                Preset::Matrix
            } else if matches!(self.geometry, Geometry::Torus { .. }) {
                Preset::Riesz
            } else {
                Preset::ComplexGradient
            });
        }
        if self.function.terms.is_none() {
            self.function.terms = Some(default_terms(&self.geometry));
        }
        if self.mc.estimator.is_none() {
            self.mc.estimator = Some(if compact { Estimator::Both } else { Estimator::Bilinear });
        }
        if self.mc.observable.is_none() {
            self.mc.observable = Some(default_observable(&self.geometry));
        }
        if self.mc.start.is_none() {
            self.mc.start = Some(StartLaw::default_for(&self.geometry));
        }
        if self.mc.bandwidth.is_none() {
            self.mc.bandwidth = Some(default_bandwidth(&self.geometry));
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> CResult<()> {
        self.transform_spec()?;
        self.function()?;
        let mc = &self.mc;
        if mc.n_paths < MIN_PATHS {
            return Err(ConfigError::new("mc.n_paths", format!("at least {MIN_PATHS} paths are required, got {}", mc.n_paths)));
        }
        for (key, v) in [("mc.y0", mc.y0), ("mc.dt", mc.dt), ("mc.bandwidth", self.bandwidth().radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(key, format!("must be positive, got {v}")));
            }
        }
        if !(mc.coarsen == 0.0 || (mc.coarsen > 0.0 && mc.coarsen < 1.0)) {
            return Err(ConfigError::new("mc.coarsen", format!("must be 0 (off) or lie in (0, 1), got {}", mc.coarsen)));
        }
        if mc.points == 0 {
            return Err(ConfigError::new("mc.points", "need at least one evaluation point"));
        }
        if mc.max_steps == 0 {
            return Err(ConfigError::new("mc.max_steps", "must be positive"));
        }
        if mc.estimator != Some(Estimator::Bilinear) && !self.geometry.is_compact() {
            return Err(ConfigError::new(
                "mc.estimator",
                "pointwise conditioning is not offered on the Heisenberg group; use \"bilinear\"",
            ));
        }
        if let Some(start) = &mc.start {
            start.validate(&self.geometry).map_err(|e| ConfigError::new("mc.start", e))?;
        }
        self.observable_coeffs()?;
        if self.suite.name != "all" && BoundSuite::from_name(&self.suite.name).is_none() && !crate::identity::CHECKS.contains(&self.suite.name.as_str()) {
            return Err(ConfigError::new("suite.name", format!("unknown suite {:?}", self.suite.name)));
        }
        self.suite_config().validate().map_err(|e| ConfigError::new("suite", e))?;
        if self.convergence.values.is_empty() || self.convergence.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ConfigError::new("convergence.values", "need at least one positive value"));
        }
        if self.convergence.axis == AxisName::NPaths && self.convergence.values.iter().any(|&v| (v as usize) < MIN_PATHS) {
            return Err(ConfigError::new("convergence.values", format!("path counts must be at least {MIN_PATHS}")));
        }
        if self.kernel.ys.is_empty() || self.kernel.ys.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
            return Err(ConfigError::new("kernel.ys", "need at least one positive y"));
        }
        if self.kernel.points < 2 {
            return Err(ConfigError::new("kernel.points", "need at least two points"));
        }
        if let Some(t) = self.identity.tol {
            if !(t >= 0.0) {
                return Err(ConfigError::new("identity.tol", format!("must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn transform_spec(&self) -> CResult<TransformSpec> {
        let d = self.geometry.horizontal_dim();
        let v = self.transform.potential;
        let spec = match self.transform.preset.clone().unwrap_or(Preset::Riesz) {
            Preset::Riesz => TransformSpec::riesz_axis(d, self.transform.axis).map_err(|e| ConfigError::new("transform.axis", e))?,
            Preset::ComplexGradient => {
                if d != 2 {
                    return Err(ConfigError::new("transform.preset", "the complex gradient needs two horizontal fields"));
                }
                TransformSpec::complex_gradient()
            }
            Preset::Matrix => {
                let rows = self.transform.matrix.as_ref().ok_or_else(|| ConfigError::new("transform.matrix", "required by preset \"matrix\""))?;
                if rows.len() != d + 1 || rows.iter().any(|r| r.len() != d + 1) {
                    return Err(ConfigError::new("transform.matrix", format!("must be {0}x{0} for {1}", d + 1, self.geometry.name())));
                }
                let mut m = CMatrix::zeros(d + 1);
                for (i, r) in rows.iter().enumerate() {
                    for (j, z) in r.iter().enumerate() {
                        m.set(i, j, c(z[0], z[1]));
                    }
                }
                TransformSpec::new(m, 0.0).map_err(|e| ConfigError::new("transform.matrix", e))?
            }
        };
        spec.with_potential(v).map_err(|e| ConfigError::new("transform.potential", e))
    }

    pub fn function(&self) -> CResult<SpectralCoefficients> {
        let terms = self.function.terms.clone().unwrap_or_else(|| default_terms(&self.geometry));
        let f = terms_to_coeffs(&self.geometry, &terms, "function.terms")?;
        if f.is_empty() {
            return Err(ConfigError::new("function.terms", "need at least one term"));
        }
        Ok(f)
    }

    /// Coefficients of `g` when it is given by terms.
    pub fn observable_coeffs(&self) -> CResult<Option<SpectralCoefficients>> {
        match self.mc.observable.clone().unwrap_or_else(|| default_observable(&self.geometry)) {
            ObservableSpec::Terms { terms } => Ok(Some(terms_to_coeffs(&self.geometry, &terms, "mc.observable.terms")?)),
            ObservableSpec::WImage => {
                if self.geometry.horizontal_dim() != 2 {
                    return Err(ConfigError::new("mc.observable", "w_image needs two horizontal fields"));
                }
                Ok(None)
            }
        }
    }

    pub fn bandwidth(&self) -> Bandwidth {
        let radius = self.mc.bandwidth.unwrap_or_else(|| default_bandwidth(&self.geometry));
        Bandwidth { radius, kernel: self.mc.kernel }
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig { ps: self.suite.ps.clone(), n_random: self.suite.n_random, seed: self.suite.seed, tol: self.suite.tol }
    }

    pub fn bound_suites(&self) -> Vec<BoundSuite> {
        match BoundSuite::from_name(&self.suite.name) {
            Some(s) => vec![s],
            None => BoundSuite::ALL.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_materializes_to_torus_defaults() {
        let cfg = parse("", &[]).unwrap().materialize().unwrap();
        assert_eq!(cfg.geometry, Geometry::torus(1));
        assert_eq!(cfg.transform.preset, Some(Preset::Riesz));
        assert_eq!(cfg.function.terms.as_ref().unwrap().len(), 2);
        assert_eq!(cfg.mc.estimator, Some(Estimator::Both));
    }

    #[test]
    fn partial_blocks_keep_other_defaults() {
        let cfg = parse("[mc]\nn_paths = 5000\n", &[]).unwrap();
        assert_eq!(cfg.mc.n_paths, 5000);
        assert_eq!(cfg.mc.y0, 4.0);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse("[mc]\nn_paths = \"many\"\n", &[]).unwrap_err();
        assert_eq!(e.key, "mc.n_paths");
        let e = parse("[mc]\nbogus = 1\n", &[]).unwrap_err();
        assert!(e.message.contains("bogus"), "{e}");
        let e = parse("", &["mc.n_paths=10".into()]).unwrap().materialize().unwrap_err();
        assert_eq!(e.key, "mc.n_paths");
        let e = parse("[geometry]\nkind = \"torus\"\ndim = 1\nk_max = 4\n[function]\nterms = [{ mode = [9], re = 1.0 }]\n", &[])
            .unwrap()
            .materialize()
            .unwrap_err();
        assert_eq!(e.key, "function.terms[0].mode");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = parse("", &["geometry.kind=su2".into(), "geometry.n_max=6".into(), "geometry.k_max=8".into(), "mc.y0=2.5".into()]).unwrap();
        assert_eq!(cfg.geometry, Geometry::su2());
        assert_eq!(cfg.mc.y0, 2.5);
        let cfg = cfg.materialize().unwrap();
        assert_eq!(cfg.transform.preset, Some(Preset::ComplexGradient));
    }

    #[test]
    fn heisenberg_pointwise_is_a_usage_error() {
        let text = "[geometry]\nkind = \"heisenberg\"\nradius = 12.0\nlambda_max = 6\nk_max = 8\n[mc]\nestimator = \"pointwise\"\n";
        let e = parse(text, &[]).unwrap().materialize().unwrap_err();
        assert_eq!(e.key, "mc.estimator");
    }
}
