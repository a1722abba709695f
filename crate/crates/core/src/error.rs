use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} must lie strictly inside (0, 1)")]
    OutsideUnitInterval { name: &'static str, value: f64 },
    #[error("{name} = {value} must lie inside [0, 1]")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(&'static str),
    #[error("invalid summary: {0}")]
    InvalidSummary(&'static str),
    #[error("count {y} outside 0..={visits}")]
    CountOutOfRange { y: u32, visits: u32 },
    #[error("argument {0} must be non-negative")]
    NegativeArgument(f64),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is singular or ill-conditioned (condition estimate {0:e})")]
    Singular(f64),
    #[error("finite-difference step shrank below {0:e} at the parameter boundary")]
    StepUnderflow(f64),
    #[error("iteration did not converge after {0} steps")]
    NotConverged(usize),
    #[error("projected matrix is not rank one ({0} eigenvalues exceed the threshold)")]
    RankMismatch(usize),
}
