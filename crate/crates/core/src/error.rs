use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("malformed {kind}: {msg}")]
    Format { kind: &'static str, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn format_err(kind: &'static str, msg: impl Into<String>) -> Error {
    Error::Format {
        kind,
        msg: msg.into(),
    }
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        invalid(msg)
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        format_err(kind, msg)
    }
}
