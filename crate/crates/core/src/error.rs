use std::path::PathBuf;

/// Errors raised anywhere in the evaluation and simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON at byte {offset}: {message}")]
    Parse { path: PathBuf, offset: usize, message: String },

    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: dangling references: {}", offenders.join(", "))]
    Integrity { path: PathBuf, offenders: Vec<String> },

    #[error("{path}: value out of range: {message}")]
    Range { path: PathBuf, message: String },

    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    /// True for failures caused by reading or decoding files, as opposed to
    /// bad parameters.
    pub fn is_io_or_parse(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Integrity { .. }
                | Error::Range { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
