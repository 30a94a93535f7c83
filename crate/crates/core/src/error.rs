use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field evaluation produced {value} at point {point:?}")]
    Evaluation { point: Vec<f64>, value: f64 },

    #[error("positivity violated: minimum {min} at {at:?}")]
    Positivity { min: f64, at: Vec<f64> },

    #[error("unknown builtin field `{0}`")]
    UnknownBuiltin(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step size underflow at t = {t}; last good state {state:?}")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("non-finite right-hand side at t = {t}, state {state:?}")]
    NonFiniteRhs { t: f64, state: Vec<f64> },

    #[error("trajectory not strictly monotone: node {index} (t = {t})")]
    NonMonotone { index: usize, t: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("time average did not converge at y = {y} (last ladder difference {diff:e})")]
    AverageNotConverged { y: f64, diff: f64 },

    #[error("sampling grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("resonant frequency vector: <a, m> = {divisor:e} for m = {m:?}")]
    Resonance { m: Vec<i64>, divisor: f64 },

    #[error("corrector residual {residual:e} exceeds tolerance {tol:e}")]
    CorrectorResidual { residual: f64, tol: f64 },

    #[error("no band-limited invariant density at degree {degree}: residual {residual:e} > {tol:e}")]
    Liouville { degree: usize, residual: f64, tol: f64 },

    #[error("chart construction failed: {0}")]
    Chart(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
