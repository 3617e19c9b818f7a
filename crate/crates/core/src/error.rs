use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a vector with norm {norm:e}")]
    ZeroVector { norm: f64 },

    #[error("within-class covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid count {0}")]
    InvalidCount(f64),

    #[error("correlation {0} is outside [0, 1]")]
    InvalidCorrelation(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no input segments")]
    EmptyInput,

    #[error("speaker model is inactive")]
    InactiveSpeaker,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid responsibilities: {0}")]
    InvalidResponsibilities(String),

    #[error("invalid speech regions: {0}")]
    InvalidSad(String),

    #[error("no coarse segments to map labels from")]
    EmptyCoarse,

    #[error("no speech regions")]
    NoSpeech,

    #[error("window [{start}, {end}) contains no frames")]
    EmptyWindow { start: f64, end: f64 },

    #[error("reference contains no speech")]
    EmptyReference,

    #[error("recording mismatch: reference {reference:?}, hypothesis {hypothesis:?}")]
    RecordingMismatch { reference: String, hypothesis: String },

    #[error("{}line {line}: {message}", path_prefix(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("line {line}: negative duration {duration}")]
    NegativeDuration { line: usize, duration: f64 },

    #[error("line {line}: interval end {end} is not after start {start}")]
    InvertedInterval { line: usize, start: f64, end: f64 },

    #[error("line {line}: expected {expected} values, found {actual}")]
    DimMismatch {
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Attaches a file path to parse errors; other variants pass through.
    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(path.into()),
                line,
                message,
            },
            other => other,
        }
    }
}
