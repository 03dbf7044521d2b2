use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The drift denominator `λ π[k(x, ·)] + φ(x) + η` hit zero for some particle.
    #[error("vanishing denominator at particle {particle} (step {step}): value {value:e}")]
    VanishingDenominator { step: u64, particle: usize, value: f64 },

    #[error("particle {particle} diverged at step {step}")]
    Divergence { step: u64, particle: usize },

    #[error("cholesky factorization failed: matrix is not positive definite")]
    CholeskyFailed,

    #[error("support mismatch: reconstruction vanishes at x = {x} where the density estimate is positive")]
    SupportMismatch { x: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("constrained least squares collapsed to the zero solution")]
    TrivialSolution,

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
