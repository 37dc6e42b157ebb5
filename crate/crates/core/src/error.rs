use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {lhs_name} {lhs} vs {rhs_name} {rhs}")]
    Shape {
        op: &'static str,
        lhs_name: &'static str,
        lhs: Shape,
        rhs_name: &'static str,
        rhs: Shape,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("label {label} out of range for {num_domains} domains")]
    Label { label: usize, num_domains: usize },

    #[error("non-finite value in {term}")]
    NonFinite { term: String },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error in {what} at byte {offset}: {msg}")]
    Parse {
        what: &'static str,
        offset: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage and IO failures map to exit code 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::InvalidArgument { .. }
        )
    }
}
