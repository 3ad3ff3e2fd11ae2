use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(
        "duplicate rating: utterance `{utterance}` scored more than once by listener `{listener}`"
    )]
    DuplicateRating { utterance: String, listener: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input is valid but carries no information for the requested
    /// statistic (constant vectors, zero-variance differences, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },

    #[error("systems `{a}` and `{b}` share no listener")]
    NoCommonListener { a: String, b: String },

    #[error("comparison graph is not strongly connected: system `{system}` {reason}")]
    Disconnected { system: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
