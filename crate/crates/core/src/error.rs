use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("no data: {0}")]
    NoData(&'static str),
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid loss selector: {0}")]
    InvalidSelector(String),
    #[error("upsampling factor {0} is not a power of two")]
    NonPowerOfTwo(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

/// Structured parse failures for on-disk containers. Every variant carries
/// the byte offset where decoding stopped.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("malformed header at offset {offset}: {detail}")]
    MalformedHeader { offset: u64, detail: String },
    #[error("dimension overflow at offset {offset}: {detail}")]
    DimensionOverflow { offset: u64, detail: String },
    #[error("checksum mismatch in section `{section}` at offset {offset}")]
    ChecksumMismatch { offset: u64, section: String },
    #[error("truncated file: section `{section}` missing at offset {offset}")]
    Truncated { offset: u64, section: String },
    #[error("unsupported content at offset {offset}: {detail}")]
    Unsupported { offset: u64, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }
}
