use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate observation at line {line}: ({country}, {year}, {variable})")]
    DuplicateObservation {
        line: u64,
        country: String,
        year: i32,
        variable: String,
    },

    #[error("unknown variable \"{0}\" (not listed in the roster)")]
    UnknownVariable(String),

    #[error("invalid roster: {0}")]
    Roster(String),

    #[error("log transform of non-positive value {value} for {country} / {variable}")]
    Domain {
        country: String,
        variable: String,
        value: f64,
    },

    #[error("insufficient data: n = {n} but estimation needs n > {required}")]
    InsufficientData { n: usize, required: usize },

    #[error(
        "{k} selectable columns exceed the enumeration cap of {cap}; use the MC3 sampler (--method bma-mc3) instead"
    )]
    EnumerationCap { k: usize, cap: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("state corruption at iteration {iteration}: {message}")]
    SamplerAborted { iteration: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityRange(f64),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
