use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV error in {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid pitch label {0:?}")]
    Pitch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency {freq_hz} Hz is not below Nyquist ({nyquist_hz} Hz)")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },

    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("buffer of {len} samples is shorter than one {frame_size}-sample frame")]
    TooShort { len: usize, frame_size: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("singular system in least-squares solve")]
    Singular,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
