use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: configuration and domain errors
/// exit 2, numeric failures exit 3 (check failures exit 4 but are reported
/// through [`crate::invariants::BoundReport`], not through this type).
#[derive(Debug, Error)]
pub enum RbkError {
    /// An argument fell outside an operation's domain (nonpositive size,
    /// threshold out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration file or parameter set is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// The numerics broke down (stiffness, exhausted step halvings, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RbkError>;
