use thiserror::Error;

/// Errors raised by the numerical core and the training harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MceError {
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} <= {threshold:e}")]
    NotPositiveDefinite { eigenvalue: f64, threshold: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("basis is not orthonormal (max deviation {deviation:e})")]
    Basis { deviation: f64 },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid probability data: {0}")]
    InvalidProbability(String),

    #[error("invalid dataset spec: {0}")]
    Spec(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for MceError {
    fn from(e: std::io::Error) -> Self {
        MceError::Io(e.to_string())
    }
}

impl From<csv::Error> for MceError {
    fn from(e: csv::Error) -> Self {
        MceError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MceError {
    fn from(e: serde_json::Error) -> Self {
        MceError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MceError>;
