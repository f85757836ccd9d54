use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid index slot: {0}")]
    BadIndex(String),
    #[error("invalid tensor: {0}")]
    Invalid(String),
    #[error("symmetry precondition violated: {0}")]
    Symmetry(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("singular linear part")]
    Singular,
    #[error("constraint failed: {0}")]
    Constraint(String),
    #[error("resonant weight {beta}: within {gap:e} of mode exponent {exponent}")]
    Resonant { beta: f64, exponent: f64, gap: f64 },
    #[error("under-resolved grid: {0}")]
    UnderResolved(String),
    #[error("no contraction: measured factor {factor}")]
    NoContraction { factor: f64 },
    #[error("iteration diverged after {iterations} steps (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("ill-conditioned fit: {0}")]
    Fit(String),
    #[error("non-convergent volume difference: {0}")]
    NonConvergent(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
