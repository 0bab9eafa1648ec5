//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A descent loop exhausted its iteration budget before reaching the
    /// requested gradient tolerance. The best iterate is attached so callers
    /// can inspect or resume it.
    #[error("optimization failed to converge: gradient norm {grad_norm:.3e} after {iterations} iterations")]
    OptimizationFailure {
        grad_norm: f64,
        iterations: usize,
        best: Vec<f64>,
    },

    /// A minimum landed on the boundary of its search neighborhood, so the
    /// interior-margin certificate is void.
    #[error("invalid neighborhood: {0}")]
    InvalidNeighborhood(String),

    /// A zero landed on the neighborhood boundary within tolerance; the
    /// parity count is undefined at this resolution.
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    /// The requested action level is not reachable within the perturbation
    /// family.
    #[error("infeasible level: {0}")]
    InfeasibleLevel(String),

    /// Something that the underlying theory rules out happened anyway.
    #[error("internal error: {0}")]
    InternalError(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::InternalError(msg.into())
    }
}
