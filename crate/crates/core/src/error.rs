use thiserror::Error;

#[derive(Debug, Error)]
pub enum MhdError {
    #[error("invalid polynomial order {0} (must be >= 1)")]
    InvalidOrder(usize),
    #[error("interpolation node {0} lies outside [-1, 1]")]
    NodeOutOfRange(f64),
    #[error("invalid mesh extent: {0}")]
    InvalidExtent(String),
    #[error("degenerate element {element}: jacobian {jacobian}")]
    DegenerateElement { element: usize, jacobian: f64 },
    #[error("unknown case '{0}'")]
    UnknownCase(String),
    #[error("invalid case combination: {0}")]
    InvalidCombination(String),
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("{solver}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        solver: String,
        iterations: usize,
        residual: f64,
    },
    #[error("{0}: operator is not positive definite (p^T A p = {1:.3e})")]
    IndefiniteOperator(String, f64),
    #[error("CFL number {cfl:.3} exceeds limit {limit:.3} (dt = {dt:.3e})")]
    CflViolation { cfl: f64, limit: f64, dt: f64 },
    #[error("reduced oracle grid too coarse: {0}")]
    UnderResolved(String),
    #[error("reduced oracle became unstable at t = {0}")]
    Unstable(f64),
    #[error("degenerate history: {0}")]
    DegenerateHistory(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for '{field}': {message}")]
    Validation { field: String, message: String },
    #[error("field dump: bad magic")]
    BadMagic,
    #[error("field dump: version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("field dump: truncated file")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MhdError>;
