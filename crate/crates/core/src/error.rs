use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("constraint matrix is rank deficient (rank {rank} < q = {q})")]
    RankDeficient { rank: usize, q: usize },

    #[error("constraint count q = {q} must be strictly below dimension p = {p}")]
    QNotLessThanP { q: usize, p: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("sample Gram matrix numerically singular (condition estimate {cond:.3e})")]
    SingularGram { cond: f64 },

    #[error("sample size n = {n} too small (need n > {bound})")]
    NTooSmall { n: usize, bound: usize },

    #[error("enumeration too large: n^(ell+1) = {cost:.3e} exceeds guard {guard:.3e}")]
    TooLarge { cost: f64, guard: f64 },

    #[error("invalid spectral bounds: need 0 < a < b, got ({a}, {b})")]
    InvalidBounds { a: f64, b: f64 },

    #[error("negative variance argument t = {0}")]
    NegativeVariance(f64),

    #[error("no root for the moment equation (U = {u:.6e})")]
    NoRoot { u: f64 },

    #[error("aspect/constraint ratios out of range: (1 - gamma) * alpha = {0} must be < 1")]
    RatioOutOfRange(f64),

    #[error("alpha = {0} must be < 1 for this formula")]
    AlphaOutOfRange(f64),

    #[error("confidence level {0} must lie in (0, 1)")]
    LevelOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
