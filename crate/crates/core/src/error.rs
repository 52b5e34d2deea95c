use thiserror::Error;

use crate::omp::RecoveryTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the operation's domain (bad index, wrong
    /// length, non-finite entry, empty support, ...).
    #[error("invalid input: {0}")]
    InputDomain(String),

    /// A column subset is numerically rank deficient.
    #[error("degenerate system: {0}")]
    DegenerateSystem(String),

    /// OMP selected a column set that became rank deficient. The trace up
    /// to the failing iteration is kept.
    #[error("degenerate system at OMP iteration {iteration}: {reason}")]
    DegenerateRun {
        iteration: usize,
        reason: String,
        partial: Box<RecoveryTrace>,
    },

    /// Exhaustive enumeration would exceed the configured subset cap.
    #[error("capacity exceeded: {required} subsets required, cap is {cap}")]
    Capacity { required: u128, cap: u64 },

    /// A threshold formula was asked for outside its standing hypothesis.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// The quantity is infinite because there is no noise (or the isometry
    /// constant is zero); callers treat this as the infinite-SNR regime.
    #[error("noise-free regime: {0}")]
    NoiseFree(String),

    /// A trace does not match the instance it is checked against.
    #[error("trace/instance mismatch: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }
}
