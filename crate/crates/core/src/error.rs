use thiserror::Error;

use crate::geometry::frank_wolfe::FwSolution;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear program is infeasible (set is empty)")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("Frank-Wolfe stopped after {} iterations with gap {:.3e}", .best.iterations, .best.gap)]
    IterationLimit { best: Box<FwSolution> },

    #[error("parameter outside the scheme's domain: {0}")]
    ParamOutOfDomain(String),

    #[error("exponent {0:.3} is outside the representable range")]
    Overflow(f64),

    #[error("parameter set is not contained in the scheme's domain: {0}")]
    SetOutsideDomain(String),

    #[error("observation has K = {got}, test expects K = {expected}")]
    KMismatch { expected: usize, got: usize },

    #[error("enumeration of {0} outcomes is too large")]
    TooLarge(u128),

    #[error("matrix entry ({0}, {1}) is not strictly positive")]
    NonPositiveEntry(usize, usize),

    #[error("epsilon = {0} is outside the admissible range")]
    EpsilonOutOfRange(f64),

    #[error("denominator is not positive on the domain (min = {0:.3e})")]
    DenominatorNotPositive(f64),

    #[error("combinator needs at least one function")]
    EmptyList,

    #[error("not a strictly positive probability distribution: {0}")]
    BadDistribution(String),

    #[error("condition index {0} is not in T")]
    TauNotInT(usize),

    #[error("segment width does not exceed 2*rho; the midpoint {estimate} is already an estimate")]
    TrivialProblem { estimate: f64 },

    #[error("midpoint {0} is neither upper- nor lower-feasible")]
    BothSidesInfeasible(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
