use thiserror::Error;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A particle-count cap was exceeded.
    #[error("resource limit: {live} live particles exceeds cap {cap}")]
    Resource { live: usize, cap: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A query against recorded data that cannot be answered exactly.
    #[error("query error: {0}")]
    Query(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument outside the domain of a mathematical operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A statistical diagnostic failed (low effective sample size, empty windows, ...).
    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
