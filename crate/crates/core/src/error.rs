use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("empty input to {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
