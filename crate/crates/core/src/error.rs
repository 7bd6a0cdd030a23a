//! Error type shared across the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug)]
pub enum Error {
    /// Tensor shapes do not satisfy an operation's contract.
    ShapeMismatch {
        op: &'static str,
        detail: String,
    },
    /// An argument violates a precondition (bad extent, bad range, ...).
    InvalidArgument {
        op: &'static str,
        detail: String,
    },
    /// A value left the mathematical domain of an operation (ln of a
    /// non-positive value, division by zero, mask outside [0,1], ...).
    Domain {
        op: &'static str,
        detail: String,
    },
    /// A NaN or infinity appeared where only finite values are allowed.
    NonFinite {
        context: String,
    },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// A binary file failed structural validation; `offset` is the byte
    /// position at which the problem was detected, when known.
    Format {
        detail: String,
        offset: Option<u64>,
    },
    /// A checkpoint was built for a different network specification.
    SpecHashMismatch {
        expected: u64,
        found: u64,
    },
    /// An evaluation needed a checkpoint that was not supplied.
    MissingCheckpoint {
        role: &'static str,
    },
}

impl Error {
    /// Stable machine-readable code, used by the CLI's one-line errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::InvalidArgument { .. } => "invalid-argument",
            Error::Domain { .. } => "domain",
            Error::NonFinite { .. } => "non-finite",
            Error::Io(_) => "io",
            Error::Format { .. } => "format",
            Error::SpecHashMismatch { .. } => "spec-hash-mismatch",
            Error::MissingCheckpoint { .. } => "missing-checkpoint",
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Error {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn arg(op: &'static str, detail: impl Into<String>) -> Error {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn format_at(detail: impl Into<String>, offset: u64) -> Error {
        Error::Format {
            detail: detail.into(),
            offset: Some(offset),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::InvalidArgument { op, detail } => write!(f, "{op}: {detail}"),
            Error::Domain { op, detail } => write!(f, "{op}: domain error: {detail}"),
            Error::NonFinite { context } => write!(f, "non-finite value: {context}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Format { detail, offset } => match offset {
                Some(off) => write!(f, "malformed file at byte {off}: {detail}"),
                None => write!(f, "malformed file: {detail}"),
            },
            Error::SpecHashMismatch { expected, found } => write!(
                f,
                "checkpoint spec hash {found:#018x} does not match expected {expected:#018x}"
            ),
            Error::MissingCheckpoint { role } => {
                write!(f, "configuration requires the `{role}` checkpoint")
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
