use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for a graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("duplicate edge ({from}, {to})")]
    DuplicateEdge { from: usize, to: usize },

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix has no positive entry")]
    NoPositiveEntry,

    #[error("matrix is not {expected}: worst deviation {deviation:e}")]
    NotStochastic {
        expected: &'static str,
        deviation: f64,
    },

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("non-finite iterate at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("weights are not strictly positive (entry {index} = {value:e})")]
    DegenerateWeights { index: usize, value: f64 },

    #[error("vector is not stochastic: {0}")]
    NotStochasticVector(String),

    #[error("backward product horizon {horizon} insufficient: row spread {spread:e} > {tolerance:e}")]
    HorizonInsufficient {
        horizon: usize,
        spread: f64,
        tolerance: f64,
    },

    #[error("assumption breach at iteration {iteration}: {what}")]
    AssumptionBreach { iteration: usize, what: String },

    #[error("invalid theory bounds: {0}")]
    InvalidBounds(String),

    #[error("spectral radius {0} >= 1, steady-state bound undefined")]
    BoundUndefined(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing snapshot for iteration {0}")]
    MissingSnapshot(usize),

    #[error("{path}: bad IDX magic number {found:#010x} at offset 0 (expected {expected:#010x})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: file truncated at offset {offset}")]
    Truncated { path: PathBuf, offset: usize },

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
