use thiserror::Error;

/// Errors raised by the numerical kernel and the statistical procedures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotSpd { min_eigenvalue: f64, tolerance: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("function not defined on the spectrum: {0}")]
    DomainError(String),

    /// The first-order limit law has (numerically) zero variance, which
    /// happens when the two measures coincide.
    #[error("estimated asymptotic variance {variance:e} is below the floor; the measures look identical, use the equality test instead")]
    NearNullDegenerate { variance: f64 },

    #[error("{skipped} of {total} bootstrap resamples had a singular covariance")]
    BootstrapDegenerate { skipped: usize, total: usize },
}

impl Error {
    /// Statistical degeneracies (as opposed to malformed requests).
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::NotSpd { .. }
                | Error::DegenerateSample(_)
                | Error::NearNullDegenerate { .. }
                | Error::BootstrapDegenerate { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
