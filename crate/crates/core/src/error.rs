use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation was invoked in a mode it does not support
    /// (e.g. a Gamma1 step on a model whose sigma depends on z).
    #[error("invalid mode: {0}")]
    InvalidMode(String),

    /// The coupling constants k1, k2, k4, k5 are all zero, so the
    /// coupling ratio gamma is undefined; the system is decoupled and
    /// should be solved on the decoupled fast path.
    #[error("decoupled system: gamma ratio undefined (k1=k2=k4=k5=0)")]
    DecoupledSystem,

    /// Too many simulated paths left the numerical range.
    #[error("divergent paths: {count} of {total} paths exceeded the overflow bound")]
    DivergentPaths { count: usize, total: usize },

    /// A regression normal-matrix stayed singular after the ridge fallback.
    #[error("singular regression system at step {step}")]
    SingularRegression { step: usize },

    /// Field lattice coverage of the simulated paths was too poor.
    #[error("lattice coverage: {off_lattice} of {total} path points off-lattice (limit 5%)")]
    Coverage { off_lattice: usize, total: usize },

    /// A solve failed to converge and the caller required convergence.
    #[error("solver did not converge: {0}")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
