// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: &'static str,
        found: [u8; 4],
    },
    #[error("unsupported version {found} at byte {offset} (expected {expected})")]
    VersionMismatch {
        offset: usize,
        expected: u16,
        found: u16,
    },
    #[error("truncated payload at byte {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("dimension is zero (header byte {offset})")]
    ZeroDim { offset: usize },
    #[error("sequence {index} has zero length (length table byte {offset})")]
    ZeroLengthSequence { offset: usize, index: usize },
    #[error("malformed container at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the contents of an input file or set
    /// rather than by the caller's configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::VersionMismatch { .. }
                | Error::Truncated { .. }
                | Error::ZeroDim { .. }
                | Error::ZeroLengthSequence { .. }
                | Error::Malformed { .. }
                | Error::Sidecar { .. }
                | Error::Degenerate(_)
                | Error::Shape(_)
        )
    }
}
