use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no header row")]
    NoHeader,
    #[error("row {row}: expected {expected} cells, got {got}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: value {value:?} is not covered by the encoding map")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("every row was dropped during preprocessing")]
    AllRowsDropped,
    #[error("no feature columns survived preprocessing")]
    NoFeatures,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("data contains non-finite values")]
    NonFinite,
    #[error("cluster {cluster}: covariance matrix is singular")]
    SingularCovariance { cluster: usize },
    #[error("cluster {cluster} is degenerate (total membership mass {mass:e})")]
    DegenerateCluster { cluster: usize, mass: f64 },
    #[error("non-finite gradient at sample {sample}")]
    NonFiniteGradient { sample: usize },
    #[error("no rule fires for this input")]
    NoCoverage,
    #[error("rule base kind mismatch: expected {expected}, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("class {0} has no training samples")]
    EmptyClass(u8),
    #[error("label {0} is not a valid class code")]
    InvalidLabel(u8),
    #[error("model file line {line}: {message}")]
    Model { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
