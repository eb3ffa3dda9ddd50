use thiserror::Error;

/// Errors raised by the constrained GMRF toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not positive definite: pivot {pivot:e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("{0} did not converge")]
    ConvergenceFailure(&'static str),
    #[error("dense block with {rows} rows exceeds the dense cap of {cap}")]
    DenseCapExceeded { rows: usize, cap: usize },
    #[error("intrinsic field has no proper distribution to sample from")]
    IntrinsicNotSamplable,
    #[error("constraint block {block} is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient {
        block: usize,
        sigma_min: f64,
        sigma_max: f64,
    },
    #[error("rank assumption violated: {what} (expected {expected}, found {found})")]
    RankAssumptionViolated {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("constraint covariance A Q^-1 A^T is singular")]
    DenseConstraintGram,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("unsupported alpha = {0} (expected 2 or 4)")]
    UnsupportedAlpha(u32),
    #[error("unsupported smoothness nu = {0}")]
    UnsupportedNu(f64),
    #[error("point ({x}, {y}) lies outside the mesh domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("covariance is ill conditioned: smallest eigenvalue {min:e}, largest {max:e}")]
    IllConditioned { min: f64, max: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
