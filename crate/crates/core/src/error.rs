use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input value lies outside the domain the operation accepts.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Shapes or dimensions of inputs do not agree.
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// A gradient, weight or update became NaN or infinite.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file has the wrong magic number, version or layout.
    #[error("format error: {0}")]
    Format(String),

    /// A file or buffer is shorter or longer than its header announces.
    #[error("length error: {0}")]
    Length(String),

    /// The operation does not apply to this kind of model.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
