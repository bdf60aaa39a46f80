use thiserror::Error;

/// Errors raised by the grid, kernel, timing and scheduling models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An index, dimension or numeric argument outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Geometry or architecture parameters that cannot be used together.
    #[error("configuration error: {0}")]
    Config(String),

    /// The profiler command stream violated the start/end protocol.
    #[error("profiler protocol error: {0}")]
    Protocol(String),

    /// An internal invariant broke (for example a stalled dataflow network).
    #[error("internal defect: {0}")]
    Defect(String),

    /// Malformed fixture or report input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
