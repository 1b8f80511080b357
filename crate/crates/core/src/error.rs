use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed audio file: {0}")]
    Format(String),
    #[error("unsupported audio encoding: {0}")]
    Unsupported(String),
    #[error("cannot resample {from} Hz to {to} Hz: not an integer factor")]
    UnsupportedRate { from: u32, to: u32 },
    #[error("degenerate signal: {0}")]
    DegenerateSignal(&'static str),
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("azimuth {0} deg outside [-90, 90]")]
    AzimuthOutOfRange(f64),
    #[error("signal of length {len} is shorter than the window ({window})")]
    SignalTooShort { len: usize, window: usize },
    #[error("frame alignment mismatch: {0}")]
    Alignment(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("degenerate references: Gram matrix is singular even with ridge")]
    DegenerateReferences,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
