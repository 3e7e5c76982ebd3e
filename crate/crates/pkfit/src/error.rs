use crate::estimators::Estimate;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An argument is outside the domain of the operation (e.g. a strike
    /// outside `[0, B]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A generator or configuration object is malformed.
    #[error("invalid spec: {0}")]
    Spec(String),

    /// Input data violate a precondition (empty quote set, negative values
    /// where non-negative ones are required, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A relative-entropy fit was asked to use a prior with zero increments
    /// in cells where the data demand mass; the divergence is infinite there.
    #[error("prior has zero increments where the data demand mass (cells {cells:?}); divergence would be infinite")]
    PriorZeroIncrement { cells: Vec<usize> },

    /// An iterative solver exhausted its iteration budget. Carries the last
    /// iterate so callers can inspect how far it got.
    #[error("solver did not converge within {iterations} iterations (KKT residual {kkt_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        kkt_residual: f64,
        last: Box<Estimate>,
    },

    /// Exact-constraint entropy minimization has no solution (noisy or
    /// mutually inconsistent price constraints).
    #[error("exact price constraints are infeasible: {reason}")]
    Infeasible { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
