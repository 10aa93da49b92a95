use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("signal is empty")]
    EmptySignal,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("placement {index} (atom {atom}, offset {offset}) does not fit in {length} samples")]
    PlacementOutOfBounds {
        index: usize,
        atom: usize,
        offset: usize,
        length: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot scale noise to a constant signal")]
    ConstantSignal,
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("atom is identically zero and cannot be normalized")]
    DegenerateAtom,
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unsupported format version {found:?}, expected {expected:?}")]
    Version { found: String, expected: String },
    #[error("window of {window} samples is shorter than the longest atom ({atom})")]
    WindowTooShort { window: usize, atom: usize },
    #[error("per-atom quota floor(p*N/M) is zero for p={p}, N={window}, M={atoms}")]
    ZeroQuota { p: f64, window: usize, atoms: usize },
    #[error("sparse code does not match the dictionary: {0}")]
    StaleCode(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::DegenerateAtom | Error::ZeroReference | Error::ConstantSignal | Error::ZeroQuota { .. } => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }
}
