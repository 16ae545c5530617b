use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A text input (pharaoh line, topic line, rule file, config file) could
    /// not be parsed. Carries a 0-based line number where one is known.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// An API was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Parallel files disagree on line counts. The CLI maps this to exit
    /// code 2.
    #[error("line count mismatch: {0}")]
    LineCountMismatch(String),

    /// Checkpoint vocabulary hash does not match the supplied vocabulary.
    #[error("vocabulary mismatch: checkpoint has {expected}, file has {actual}")]
    VocabMismatch { expected: String, actual: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line, msg: msg.into() }
    }
}
