use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input data violates a model invariant (grid ordering, probability mass, ...).
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    /// Matrix or grid dimensions do not line up.
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },

    /// An index outside the type grid.
    #[error("index out of range: {0}")]
    Index(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition {property} violated at {location}: {detail}")]
    Precondition {
        property: String,
        location: String,
        detail: String,
    },

    /// Caller misuse of an API (bad flag combination, non-positive epsilon, ...).
    #[error("usage: {0}")]
    Usage(String),

    /// Exhaustive enumeration would exceed its candidate budget.
    #[error("candidate lattice has {count} points, limit is {limit}")]
    TooLarge { count: u128, limit: u128 },

    /// A numerical routine failed to produce an answer.
    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(
        what: impl Into<String>,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn precondition(
        property: impl Into<String>,
        location: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Precondition {
            property: property.into(),
            location: location.into(),
            detail: detail.into(),
        }
    }
}
