use thiserror::Error;

/// Errors raised by chain construction, spectral analysis and bias evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chain is not rank 2 (third singular value ratio {ratio:.3e})")]
    NotRank2 { ratio: f64 },

    #[error("decomposition failed its invariants: {0}")]
    Decomposition(String),

    #[error("chain has no unique stationary distribution")]
    NoUniqueStationary,

    #[error("chain is reducible (spectral gap {beta:.3e}); consistent estimation is not possible")]
    Reducible { beta: f64 },

    #[error("bound not applicable: {0}")]
    Inapplicable(String),

    #[error("power iteration did not converge after {iterations} iterations (last relative gap {gap:.3e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("size guard exceeded: {0}")]
    GuardExceeded(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
