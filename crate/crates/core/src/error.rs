use thiserror::Error;

/// Rejections produced while validating a raw scenario document.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("catalog is empty: at least one content is required")]
    EmptyCatalog,
    #[error("no users: at least one user profile is required")]
    NoUsers,
    #[error("sizes and freshness have different lengths ({sizes} vs {freshness})")]
    CatalogLengthMismatch { sizes: usize, freshness: usize },
    #[error("sizes[{index}] = {value} is not positive")]
    NonPositiveSize { index: usize, value: f64 },
    #[error("freshness[{index}] = {value} is outside [0, 1]")]
    FreshnessOutOfRange { index: usize, value: f64 },
    #[error("users[{user}].interests has length {got}, expected {expected}")]
    InterestLengthMismatch {
        user: usize,
        got: usize,
        expected: usize,
    },
    #[error("users[{user}].interests[{index}] = {value} is outside [0, 1]")]
    InterestOutOfRange {
        user: usize,
        index: usize,
        value: f64,
    },
    #[error("users[{user}].offpeak_load = {value} is negative")]
    NegativeOffpeakLoad { user: usize, value: f64 },
    #[error("connectivity must be {expected}x{expected}, got {rows} rows")]
    ConnectivityShape { expected: usize, rows: usize },
    #[error("connectivity[{row}] has length {got}, expected {expected}")]
    ConnectivityRowLength {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("connectivity[{row}][{col}] = {value} is outside [0, 1]")]
    ConnectivityOutOfRange { row: usize, col: usize, value: f64 },
    #[error("connectivity[{index}][{index}] = {value}, diagonal must be 0")]
    NonZeroDiagonal { index: usize, value: f64 },
    #[error("beta = {0} must be positive")]
    NonPositiveBeta(f64),
    #[error("price_cap = {0} must be positive")]
    NonPositivePriceCap(f64),
    #[error("policy: {field} = {value} is outside [{lo}, {hi}]")]
    PolicyOutOfRange {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("failed to parse scenario document: {0}")]
    Parse(String),
}

/// Failures raised by the solver and cost estimator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("user index {index} out of range (N = {users})")]
    UserIndexOutOfRange { index: usize, users: usize },
    #[error("selling price requested for user {user} with an empty cached set")]
    EmptyCachedSet { user: usize },
    #[error(
        "exact cost enumeration needs {indicators} joint indicators (> {max}); use monte-carlo"
    )]
    ExactTooLarge { indicators: usize, max: usize },
    #[error("monte-carlo cost estimation needs at least one sample")]
    NoSamples,
    #[error(
        "best-response iteration did not converge after {iterations} rounds; trace: {trace}"
    )]
    NonConvergence { iterations: usize, trace: String },
    #[error("invalid pricing policy: {0}")]
    Policy(#[from] ValidationError),
}
