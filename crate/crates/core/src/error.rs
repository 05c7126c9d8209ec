use alloc::string::String;

use crate::map::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Malformed input: wrong shapes, non-finite entries, bad probabilities.
    #[error("structural error: {0}")]
    Structural(String),

    /// The matrices are well formed but violate the MAP sign/row-sum rules.
    #[error("invalid MAP: {0}")]
    InvalidMap(ValidationReport),

    /// A linear solve failed or is too ill-conditioned to trust.
    #[error("analysis error: {what} (residual {residual:e})")]
    Analysis { what: String, residual: f64 },

    /// `Var(A^power)` is zero, so the correlation is undefined.
    #[error("degenerate variance of the inter-arrival power {power}")]
    DegenerateVariance { power: usize },

    /// A state space would exceed the configured dense-algebra cap.
    #[error("capacity exceeded: {dim} states > cap {cap}")]
    Capacity { dim: usize, cap: usize },

    /// A value is outside the domain of the operation (e.g. log of a non-positive moment).
    #[error("domain error: {0}")]
    Domain(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    /// Vector or batch dimensions do not line up.
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn analysis(what: impl Into<String>, residual: f64) -> Self {
        Error::Analysis {
            what: what.into(),
            residual,
        }
    }

    pub(crate) fn shape(expected: usize, found: usize) -> Self {
        Error::Shape { expected, found }
    }
}
