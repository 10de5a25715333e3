use alloc::string::String;
use core::fmt;

/// Failures surfaced by the numerical kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point, parameter or function argument lies outside its admissible range.
    Domain(String),
    /// A function evaluation produced NaN or an infinity.
    NonFinite(String),
    /// A spectral mode lies outside the configured truncation.
    ModeOutOfRange(String),
    /// Adaptive quadrature stopped before reaching the requested tolerance.
    Quadrature { achieved: f64, requested: f64 },
    /// The operation is not defined for this geometry.
    UnsupportedModel(&'static str),
    /// A ladder image failed its eigen-residual certificate.
    LadderResidual { mode: String, residual: f64 },
    /// Monte Carlo paths that did not exit before the step budget ran out.
    Truncated { max_steps: usize, survivors: usize, paths: usize },
    /// An input violates a documented precondition.
    Contract(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite evaluation: {msg}"),
            Error::ModeOutOfRange(msg) => write!(f, "mode outside truncation: {msg}"),
            Error::Quadrature { achieved, requested } => write!(
                f,
                "quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}"
            ),
            Error::UnsupportedModel(what) => write!(f, "unsupported model: {what}"),
            Error::LadderResidual { mode, residual } => {
                write!(f, "ladder image of {mode} is not an eigenfunction (residual {residual:.3e})")
            }
            Error::Truncated { max_steps, survivors, paths } => write!(
                f,
                "{survivors} of {paths} paths still alive after {max_steps} steps"
            ),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
        }
    }
}
