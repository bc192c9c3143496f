//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction and evaluation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A measure failed a construction invariant (weights, ordering, ...).
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// The open images of an iterated function system overlap.
    #[error("open set condition violated: {0}")]
    OscViolation(String),

    /// An argument lies outside the domain of the evaluator.
    #[error("domain error: {0}")]
    Domain(String),

    /// An atomization would exceed the configured atom budget.
    #[error("atom budget exceeded: {needed} atoms requested, budget is {budget}")]
    AtomBudget { needed: u128, budget: usize },

    /// Consecutive atoms collapse in the scale of the base measure, so the
    /// support-inclusion assumption does not hold.
    #[error("support inclusion violated: {0}")]
    SupportInclusion(String),

    /// Inversion was requested for the Neumann-Neumann operator, whose
    /// kernel is the constants.
    #[error("operator is not invertible under Neumann-Neumann boundary conditions")]
    NotInvertible,

    /// Sample vectors do not match the atom layout they claim to live on.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Too few usable points for a least-squares fit.
    #[error("fit error: {0}")]
    Fit(String),

    /// A scalar parameter violates its precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
