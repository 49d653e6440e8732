use std::io;

use thiserror::Error;

/// Errors produced anywhere in the streaming pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Arguments violated an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: {0}")]
    Training(String),

    /// A download can never finish because the trace has zero throughput
    /// for the rest of its horizon.
    #[error("download of {bytes} bytes stalls beyond the trace horizon (started at {start:.3}s)")]
    StallBeyondHorizon { bytes: u64, start: f64 },

    /// The session has no chunks left to download.
    #[error("session exhausted after {0} chunks")]
    SessionExhausted(usize),

    /// A file did not match its documented format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short, stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Training(_) => "training",
            Error::StallBeyondHorizon { .. } => "stall",
            Error::SessionExhausted(_) => "exhausted",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! input_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Input(format!($($arg)*))
    };
}
pub(crate) use input_err;
