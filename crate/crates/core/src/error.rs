use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lo ({lo}) must be strictly less than hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid degrees of freedom: {0}")]
    InvalidDof(String),

    #[error("cannot draw {k} items from a population of {population}")]
    InvalidSize { population: usize, k: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: sse {sse} is not above the floor {floor}")]
    DegenerateFit { sse: f64, floor: f64 },

    #[error("no tree in the forest is eligible for fiducial weighting")]
    NoValidModel,

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported archive format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("column `{0}` not found")]
    AbsentColumn(String),

    #[error("no rows left after dropping {dropped} incomplete rows")]
    NoRows { dropped: usize },

    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
}

/// Coarse error classes, used by the CLI to choose an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidRange { .. }
            | Error::InvalidSize { .. }
            | Error::InvalidWeights(_)
            | Error::InvalidInput(_) => ErrorClass::Usage,
            Error::InvalidDof(_) | Error::DegenerateFit { .. } | Error::NoValidModel => {
                ErrorClass::Numeric
            }
            Error::InsufficientData(_)
            | Error::Io { .. }
            | Error::Parse(_)
            | Error::UnsupportedVersion { .. }
            | Error::AbsentColumn(_)
            | Error::NoRows { .. }
            | Error::Write { .. } => ErrorClass::Data,
        }
    }
}
