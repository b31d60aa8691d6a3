use thiserror::Error;

/// Errors raised by the numeric routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("divided difference needs pairwise distinct points")]
    DistinctnessViolation,

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("no bracket for inverse on [{lo}, {hi}]: generator is not increasing there")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("inner means out of order at ({x}, {y}): {lower} > {upper}")]
    OrderViolation { x: f64, y: f64, lower: f64, upper: f64 },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} outside 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("bisection stalled at float resolution before reaching width {tol:e}")]
    ToleranceTooSmall { tol: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("generator `{0}` has no derivative")]
    MissingDerivative(String),

    #[error("grid too coarse: fixed-point clusters merge at resolution {0}")]
    GridTooCoarse(usize),

    #[error("classification error: {0}")]
    ClassificationError(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("function `{label}` is not strictly increasing near {at}")]
    NonMonotone { label: String, at: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
