//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. Variants are
//! grouped by failure mode rather than by module so callers can match on the
//! kind of problem (bad file, bad shape, bad parameter, numerical breakdown)
//! without caring which stage produced it. The pipeline wraps errors in
//! [`Error::Stage`] so a failed run always names the stage that aborted.

use std::path::PathBuf;
use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file content: bad magic, unparseable header, bad CSV field.
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    /// File ended before the declared payload was fully read.
    #[error("truncated file {path}: expected {expected} payload bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    /// Incompatible dimensions between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter violates its documented range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Input data violates a domain requirement (negative entries, non-finite
    /// values, labels out of range, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A class in the label set has no members to sample from.
    #[error("class {class} has no members in the label set")]
    EmptyClass { class: usize },

    /// Numerical conditioning made a linear solve meaningless.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// A low-rank approximation produced an invalid intermediate.
    #[error("approximation failure: {0}")]
    Approximation(String),

    /// A guard on problem size was exceeded.
    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    /// Another run holds the working-directory lock.
    #[error(
        "output directory {path} is locked by another run \
         (delete the .egograph.lock file if no other process is active)"
    )]
    Locked { path: PathBuf },

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// I/O failure with the offending path attached.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            // Keep the innermost stage name; re-wrapping would bury it.
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Adapter for `map_err` that attaches a path to an `std::io::Error`.
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
