use std::path::PathBuf;

use thiserror::Error;

use crate::train::GenerationRecord;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An angle fell outside the active normalization mode's range.
    #[error("angle {angle} deg outside [{min}, {max}] for mode {mode}")]
    AngleOutOfRange {
        angle: f64,
        mode: crate::net::DenormMode,
        min: f64,
        max: f64,
    },

    /// A normalized network value fell outside [0, 1].
    #[error("normalized value {0} outside [0, 1]")]
    NormOutOfRange(f64),

    /// A non-finite number where a finite one is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training hit a non-finite parameter or output mid-run. The records
    /// accumulated up to the failing generation are retained for inspection.
    #[error("training diverged at generation {generation}: {what}")]
    Diverged {
        generation: u64,
        what: String,
        records: Vec<GenerationRecord>,
    },

    /// No commanded pose on the search grid produces positive displacement.
    #[error("geometry cannot crawl: no pose in the {mode} angle range touches ground with positive displacement")]
    CannotCrawl { mode: crate::net::DenormMode },

    /// Nothing to emit.
    #[error("no data: {0}")]
    Empty(&'static str),

    /// A reference generation table failed its target-recovery arithmetic.
    #[error("reference table inconsistent: {0}")]
    TableInconsistent(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed line in a model file or reference table.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
