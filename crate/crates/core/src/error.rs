use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration too large: {m} sign patterns requested, at most 2^{max} supported without a Monte-Carlo budget")]
    EnumerationTooLarge { m: usize, max: usize },

    #[error("degenerate family: every vector has zero norm")]
    DegenerateFamily,

    #[error("not positive definite at point (witness direction {witness:?}, value {value:e})")]
    NotPositiveDefinite { witness: Vec<f64>, value: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("differentiability failure at point: {0}")]
    DifferentiabilityFailure(String),

    #[error("could not draw a non-degenerate sample pair after {attempts} attempts")]
    DegenerateSamples { attempts: usize },

    #[error("certificate stale: sandwich violated by {violation:e} at probe {probe:?}")]
    CertificateStale { violation: f64, probe: Vec<f64> },

    #[error("empty effective domain: every grid value is +inf")]
    EmptyDomain,

    #[error("inconsistent estimates: mu_hat = {mu_hat} exceeds L_hat = {l_hat}")]
    InconsistentEstimates { mu_hat: f64, l_hat: f64 },

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalogEntry(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(LabError::DimensionMismatch { expected, found })
    }
}
