use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state norm collapsed to {norm:e} at t = {t}; reduce the time step")]
    NormCollapse { norm: f64, t: f64 },

    #[error("conditional state undefined: branch population {population:e} below threshold")]
    UndefinedConditional { population: f64 },

    #[error("degenerate evidence: normalization of the Bayesian update vanished")]
    DegenerateEvidence,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("quadrature did not converge to tolerance {tol:e} (estimate {estimate:e})")]
    Tolerance { tol: f64, estimate: f64 },

    #[error("record cadence mismatch: {0}")]
    CadenceMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
