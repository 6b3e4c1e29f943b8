//! Error taxonomy for the library.
//!
//! Errors are grouped by what the caller can do about them:
//!
//! * [`Error::Config`] — the requested discretization or model is internally
//!   inconsistent (mismatched divisibilities, unresolvable geometry, bad
//!   parameter ranges).  Fix the input.
//! * [`Error::Data`] — numerical data violates a stated precondition
//!   (spectral bounds, dimension mismatches, degenerate norms).
//! * [`Error::Unsupported`] — a valid request outside the implemented range
//!   (e.g. nodal interpolation in two dimensions).
//! * [`Error::Solver`] — a linear solve failed its accuracy contract even
//!   after fallback; carries a diagnostic of the failure.
//! * Database errors ([`Error::DbVersion`], [`Error::DbTruncated`],
//!   [`Error::DbChecksum`], [`Error::DbFormat`]) — a stored offline database
//!   could not be read back; each cause is reported distinctly so tooling can
//!   tell an outdated file from a corrupted one.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent discretization or model parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical data violating a documented precondition.
    #[error("data error: {0}")]
    Data(String),

    /// Valid request outside the implemented feature range.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A linear solve missed its residual contract; `context` names the
    /// system, `detail` reports the diagnostic (residual reached, condition
    /// estimate, pivot failure, ...).
    #[error("linear solver failure in {context}: {detail}")]
    Solver {
        /// Which system was being solved.
        context: String,
        /// Diagnostic detail for the failure.
        detail: String,
    },

    /// Underlying I/O failure while reading or writing files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Database file has a format version this build does not read.
    #[error("database format version {found} is not supported (expected {expected})")]
    DbVersion {
        /// Version found in the file header.
        found: u32,
        /// Version this build writes and reads.
        expected: u32,
    },

    /// Database file ends before the declared payload is complete.
    #[error("database file is truncated: needed {needed} more byte(s) at offset {offset}")]
    DbTruncated {
        /// File offset at which data ran out.
        offset: u64,
        /// Number of missing bytes for the current field.
        needed: u64,
    },

    /// Database payload does not match its stored checksum.
    #[error("database checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    DbChecksum {
        /// Checksum stored in the file trailer.
        stored: u64,
        /// Checksum recomputed from the payload.
        computed: u64,
    },

    /// Database file is structurally malformed (bad magic, impossible
    /// lengths) in a way distinct from truncation or checksum failure.
    #[error("database format error: {0}")]
    DbFormat(String),
}

impl Error {
    /// Shorthand constructor for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand constructor for [`Error::Data`].
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Shorthand constructor for [`Error::Solver`].
    pub fn solver(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Solver {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
