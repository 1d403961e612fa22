//! Error type shared by every stage of the core pipeline.

use alloc::string::String;
use core::fmt;

/// Alias used throughout the crate.
pub type Result<T> = core::result::Result<T, CoreError>;

/// Failures surfaced by the algorithmic core.
///
/// Contract violations cover dimension mismatches and precondition breaches;
/// the remaining variants are domain-specific conditions callers are expected
/// to handle (an exhausted category pool, a missing fixture vector, a metric
/// that is undefined on single-class input).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// A precondition on an operation did not hold.
    ContractViolation(String),
    /// Not enough distinct descriptions to sample the requested categories.
    CategoryPoolExhausted { needed: usize, available: usize },
    /// A fixture-backed provider had no vector stored for the sample id.
    FixtureNotFound(String),
    /// The requested metric is undefined on the given input.
    UndefinedMetric(String),
    /// A provider failed to produce a usable semantic vector.
    Provider(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ContractViolation(msg) => write!(f, "contract violation: {msg}"),
            CoreError::CategoryPoolExhausted { needed, available } => write!(
                f,
                "category pool exhausted: need {needed} distinct descriptions, only {available} available"
            ),
            CoreError::FixtureNotFound(id) => write!(f, "fixture not found for sample id {id:?}"),
            CoreError::UndefinedMetric(msg) => write!(f, "undefined metric: {msg}"),
            CoreError::Provider(msg) => write!(f, "provider error: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}

/// Shorthand for building a [`CoreError::ContractViolation`].
pub(crate) fn contract(msg: impl fmt::Display) -> CoreError {
    CoreError::ContractViolation(alloc::format!("{msg}"))
}
