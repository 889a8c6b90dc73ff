use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("curvature must be finite and positive, got {0}")]
    InvalidCurvature(f64),

    #[error("invalid batch: anchor {anchor} has no positive")]
    EmptyPositives { anchor: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate hyperplane: orientation has zero norm")]
    DegenerateHyperplane,

    #[error("{what} = {value} out of range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("config key `{key}`: expected {expected}, got `{value}`")]
    ConfigType {
        key: String,
        expected: &'static str,
        value: String,
    },

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    ConfigValue(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header at line {line}: {message}")]
    MalformedHeader { line: usize, message: String },

    #[error("line {line}: expected {expected} values, found {found}")]
    RowLength {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: cannot parse `{token}`")]
    ParseValue { line: usize, token: String },

    #[error("bad magic at offset {offset}: expected {expected:?}")]
    BadMagic { offset: u64, expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("unexpected end of data at offset {offset}")]
    Truncated { offset: u64 },

    #[error("invalid value at offset {offset}: {message}")]
    InvalidData { offset: u64, message: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Broad failure class, used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            UnknownKeys(_) | ConfigType { .. } | ConfigSyntax { .. } | ConfigValue(_) => {
                ErrorKind::Config
            }
            Io { .. }
            | MalformedHeader { .. }
            | RowLength { .. }
            | ParseValue { .. }
            | BadMagic { .. }
            | UnsupportedVersion(_)
            | Truncated { .. }
            | InvalidData { .. } => ErrorKind::Data,
            DimensionMismatch { .. }
            | EmptyPositives { .. }
            | InvalidInput(_)
            | OutOfRange { .. }
            | ShapeMismatch(_) => ErrorKind::Data,
            InvalidCurvature(_) | DegenerateHyperplane | NonFinite(_) => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
