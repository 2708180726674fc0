use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type. Variants carry enough context to report the
/// offending quantity without holding on to large matrices.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: relative defect {defect:.3e} exceeds {tol:.1e} ({what})")]
    NotHermitian { what: &'static str, defect: f64, tol: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("{what} must be {requirement}, got {got}")]
    InvalidParameter { what: String, requirement: &'static str, got: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("environment resolvent is singular at frequency {omega} (mode network has a real pole)")]
    SingularResolvent { omega: f64 },

    #[error("Kossakowski matrix is not Hermitian (relative defect {defect:.3e}); \
             positivity repair is only defined for Hermitian input")]
    NonHermitianKossakowski { defect: f64 },

    #[error("unknown method tag '{0}'")]
    UnknownMethod(String),

    #[error("time grid is invalid: {0}")]
    InvalidGrid(String),

    #[error("integration diverged at t = {at_time}: {reason}")]
    Diverged { at_time: f64, reason: String },

    #[error("composite Hilbert space dimension {dim} exceeds cap {cap}; \
             reduce mode count or occupation cutoff")]
    DimensionCap { dim: usize, cap: usize },

    #[error("mode occupation truncation did not converge: top-layer population \
             {population:.3e} exceeds {tol:.1e} at occupation cutoff {n_max}")]
    TruncationUnconverged { population: f64, tol: f64, n_max: usize },

    #[error("geometric mean requires positive values; got {0}")]
    NonPositiveValue(f64),

    #[error("eigenvalue normalization is undefined: largest eigenvalue {max:.3e} is not positive")]
    DegenerateNormalization { max: f64 },

    #[error("{what} is not positive semidefinite: smallest eigenvalue \
             {min_eigenvalue:.3e} is below tolerance -{tol:.1e}")]
    NotPositiveSemidefinite { what: &'static str, min_eigenvalue: f64, tol: f64 },

    #[error("trajectories are on different grids: {0}")]
    GridMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(what: impl Into<String>, requirement: &'static str, got: f64) -> Self {
        Error::InvalidParameter { what: what.into(), requirement, got }
    }
}
