use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid auction spec: {0}")]
    InvalidSpec(String),

    #[error("bid {0} is not on the bid grid")]
    InvalidBid(u32),

    #[error("value {0} is outside the value set")]
    InvalidValue(u32),

    #[error("invalid jump vector: {0}")]
    InvalidJump(String),

    #[error("strategy is not representable as a jump vector: {0}")]
    NonRepresentable(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("utility curvature is not supported here: {0}")]
    UnsupportedUtility(String),

    #[error("payoff undefined: {0}")]
    Domain(String),

    #[error("level {level} is outside the closed-form characterisation: {reason}")]
    OutOfCharacterization { level: u32, reason: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("spec too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no EM start converged within {iterations} iterations (best log-likelihood {best_log_likelihood}; {detail})")]
    NonConvergence {
        iterations: usize,
        best_log_likelihood: f64,
        detail: String,
    },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("{source_name}:{line}: {message}")]
    Ingest {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
