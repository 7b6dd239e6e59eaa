use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid construction parameters (grid size, pole data, degrees...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A radius, point or parameter lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violate a structural expectation (non-monotone profile, size mismatch...).
    #[error("data error: {0}")]
    Data(String),

    /// A diagnostic does not apply to the supplied input (e.g. W(0) = 0).
    #[error("inapplicable: {0}")]
    Inapplicable(String),

    /// Newton iteration failed to reach the requested tolerance.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
