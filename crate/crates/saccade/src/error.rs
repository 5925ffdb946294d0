use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what}: bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    Magic { what: String, expected: u32, found: u32 },
    #[error("{what}: truncated, need {expected} bytes but have {actual}")]
    Truncated { what: String, expected: usize, actual: usize },
    #[error("{what}: line {line}: {detail}")]
    Parse { what: String, line: usize, detail: String },
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] saccade_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status classes.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use saccade_core::Error as C;
        match self {
            Error::Usage(_) | Error::Core(C::Config(_)) => EXIT_USAGE,
            Error::Core(C::NonFinite { .. }) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}
