use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// The density grid cannot be sampled from.
    #[error("invalid density grid: {0}")]
    InvalidGrid(String),
    /// A text file did not follow its format.
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    /// Two structures that must agree (graph, embedding, border graph) do not.
    #[error("inconsistent model: {0}")]
    Consistency(String),
    #[error("no AS path from {from} to {to}")]
    NoPath { from: usize, to: usize },
    #[error("device {0} has no attachment location within reach")]
    NoAttachment(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
