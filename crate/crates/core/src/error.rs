use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    /// Adaptive integration could not meet the tolerance without the step
    /// size collapsing.
    #[error("integration step underflow at t = {t} (state {state:?})")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("non-finite state at step index {index}")]
    Divergence { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Lipschitz growth estimate failed: {0}")]
    UnboundedGrowth(String),
}
