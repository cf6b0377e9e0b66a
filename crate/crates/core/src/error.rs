use std::path::PathBuf;

use thiserror::Error;

/// Specific rejection reasons for the binary motion and checkpoint formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorCode {
    BadMagic,
    VersionMismatch,
    Truncated,
    HeaderInvalid,
    LengthMismatch,
    TrailingBytes,
}

impl std::fmt::Display for FormatErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FormatErrorCode::BadMagic => "bad magic",
            FormatErrorCode::VersionMismatch => "version mismatch",
            FormatErrorCode::Truncated => "truncated payload",
            FormatErrorCode::HeaderInvalid => "invalid header",
            FormatErrorCode::LengthMismatch => "header/payload length mismatch",
            FormatErrorCode::TrailingBytes => "trailing bytes",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("division by zero in elementwise div")]
    DivisionByZero,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("index {index} out of range 0..={max} for {what}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("format error ({code}): {detail}")]
    Format {
        code: FormatErrorCode,
        detail: String,
    },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn format(code: FormatErrorCode, detail: impl Into<String>) -> Self {
        Error::Format {
            code,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Format { .. } | Error::Io { .. } | Error::Json(_) => 2,
            Error::NonFinite(_) => 3,
            Error::ShapeMismatch { .. } | Error::OutOfRange { .. } => 2,
            Error::DivisionByZero
            | Error::TapeConsumed
            | Error::NonScalarLoss(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
