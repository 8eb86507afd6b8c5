use thiserror::Error;

/// Errors produced by construction, validation and solver plumbing.
#[derive(Debug, Error)]
pub enum SteerkitError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("subsystem index out of range: {index} (have {count} subsystems)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("matrix is not Hermitian (max |M - M†| = {residual:.3e}, tol {tol:.3e})")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    #[error("enumeration too large: {count} strategies exceeds the {limit} guard")]
    EnumerationOverflow { count: u128, limit: u128 },

    #[error("solver returned an inconclusive verdict: {0}")]
    Inconclusive(String),

    #[error("unknown solver adapter '{0}' (set STEERKIT_SOLVER=clarabel)")]
    UnknownSolver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SteerkitError>;
