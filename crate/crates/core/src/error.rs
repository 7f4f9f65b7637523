use std::fmt;

/// Crate-wide error type.
///
/// The CLI maps the variants onto process exit codes, so new variants need a
/// mapping in `cli::exit_code`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated an operation's contract (bad coordinate, shape
    /// mismatch, value out of range).
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration file or checkpoint is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// A file could not be parsed in its declared format.
    #[error("format error: {0}")]
    Format(String),
    /// Training produced a non-finite loss.
    #[error("numeric divergence: {0}")]
    Diverged(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl fmt::Display) -> Self {
        Error::Domain(msg.to_string())
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Error::Config(msg.to_string())
    }

    pub fn format(msg: impl fmt::Display) -> Self {
        Error::Format(msg.to_string())
    }
}
