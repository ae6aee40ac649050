use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary container (IDX, CIFAR batch, shard archive) is malformed.
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("wrong magic in {what}: expected {expected}, found {found}")]
    WrongMagic {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("digest mismatch for {path}: expected {expected}, got {actual}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("network error fetching {url}: {reason}")]
    Network { url: String, reason: String },

    #[error("shard manifest mismatch: {0}")]
    Manifest(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parameter layout mismatch: {0}")]
    Layout(String),

    /// A partition, training, or grid specification violates its invariants.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("encoder is frozen")]
    Frozen,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn spec(reason: impl Into<String>) -> Self {
        Error::InvalidSpec(reason.into())
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any `Context` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for problems with input files: unreadable, malformed, or failing
    /// verification.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Io { .. }
                | Error::Format { .. }
                | Error::WrongMagic { .. }
                | Error::DigestMismatch { .. }
                | Error::Manifest(_)
        )
    }
}
