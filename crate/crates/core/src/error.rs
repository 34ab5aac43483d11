use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} sums to {sum:.17} (tolerance 1e-12)")]
    NonStochasticRow { what: String, sum: f64 },

    #[error("{what} has invalid entry {value}")]
    InvalidProbability { what: String, value: f64 },

    #[error("invalid MDP structure: {0}")]
    InvalidStructure(String),

    #[error("chain does not terminate: surviving mass {residual:e} after {iterations} iterations")]
    NonTerminatingChain { iterations: usize, residual: f64 },

    #[error("success is unreachable from states {0:?}")]
    SuccessUnreachable(Vec<usize>),

    #[error("linear solve failed: {0}")]
    SolverFailure(String),

    #[error("success probability is zero")]
    DivisionByZero,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("consistency check `{check}` failed: residual {residual:e} exceeds {tolerance:e}")]
    ConsistencyCheck {
        check: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("episode on stream {stream} exceeded {max_steps} steps")]
    HorizonGuardTripped { stream: u64, max_steps: usize },

    #[error("input contains no episodes")]
    EmptyInput,

    #[error("occupancy support mismatch at state {0}")]
    SupportMismatch(usize),

    #[error("episode {0} carries no return")]
    MissingReturn(usize),

    #[error("proxy success is unreachable from state {0}")]
    ProxySuccessUnreachable(usize),

    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
