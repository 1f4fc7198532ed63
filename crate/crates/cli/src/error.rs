use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{key}`: {message}")]
    Semantic { key: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Model(#[from] clonesel_core::Error),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn semantic(key: &str, message: impl Into<String>) -> Self {
        CliError::Semantic {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// 1 verification failure, 2 usage or configuration error, 3 runtime error.
    pub fn exit_code(&self) -> i32 {
        use clonesel_core::Error as E;
        match self {
            CliError::Verification(_) => 1,
            CliError::Syntax { .. } | CliError::Semantic { .. } | CliError::Usage(_) => 2,
            CliError::Model(
                E::InvalidConfig(_)
                | E::UnknownPreset(_)
                | E::Assumptions(_)
                | E::MisalignedGrid { .. }
                | E::NotMidpointGrid
                | E::Structural(_),
            ) => 2,
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Model(_) => 3,
        }
    }
}
