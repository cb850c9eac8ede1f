use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimension mismatch, bad parameter range, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A point or trajectory left the region where a map or form is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Non-finite values or a quadrature residual above tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The request is well-formed but outside what the decision procedure handles.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A scenario file field failed to parse or validate.
    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
