use thiserror::Error;

/// Failures reported by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("unphysical covariance: eigenvalue {eigenvalue:.6e} of V + (i/2)Omega is negative")]
    Unphysical { eigenvalue: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("step refinement did not converge: {0}")]
    Refinement(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("time {t} exceeds the bath recurrence window {limit}")]
    Recurrence { t: f64, limit: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
