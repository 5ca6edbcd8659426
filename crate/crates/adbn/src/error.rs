use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdbnError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {message} (byte offset {offset})", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] adbn_core::Error),
}

pub type Result<T> = std::result::Result<T, AdbnError>;

impl AdbnError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AdbnError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        AdbnError::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit status: 1 usage, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        use adbn_core::Error as E;
        match self {
            AdbnError::Usage(_) | AdbnError::Config { .. } => 1,
            AdbnError::Io { .. } | AdbnError::Format { .. } | AdbnError::Data(_) => 2,
            AdbnError::Core(e) => match e {
                E::InvalidArgument(_) => 1,
                E::DimensionMismatch { .. }
                | E::EmptyInput(_)
                | E::LabelOutOfRange { .. }
                | E::ValueOutOfRange { .. } => 2,
                _ => 3,
            },
        }
    }
}
