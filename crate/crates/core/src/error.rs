use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("field `{label}` has a non-finite sample at index {index}")]
    NonFinite { label: String, index: usize },
    #[error("field `{label}` must be positive but is {value} at x = {x}")]
    NonPositive { label: String, x: f64, value: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix is not cooperative: entry ({row}, {col}) = {value}")]
    NotCooperative { row: usize, col: usize, value: f64 },
    #[error("matrix is reducible")]
    Reducible,
    #[error("eigensolver did not converge after {iterations} iterations (last change {last_change:e}, residual {residual:e})")]
    NoConvergence { iterations: usize, last_change: f64, residual: f64 },
    #[error("iterate lost positivity at index {index} (value {value:e}); operator is not cooperative")]
    NonPositiveIterate { index: usize, value: f64 },
    #[error("singular or indefinite factorization at pivot {0}")]
    Singular(usize),
    #[error("no positive speed regime: k(0) = {0} is not negative")]
    NoSpeedRegime(f64),
    #[error("bracket search failed: {0}")]
    Bracket(String),
    #[error("no positive equilibrium: lambda_A = {0} is not positive")]
    NoPositiveEquilibrium(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("CFL violation: dt = {dt} exceeds {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("speed c = {c} is below the admissible threshold {threshold} (c* = {c_star})")]
    SpeedTooSmall { c: f64, c_star: f64, threshold: f64 },
    #[error("experiment inapplicable: {0}")]
    Inapplicable(String),
    #[error("solution became non-finite ({0})")]
    BlowUp(f64),
}
