use std::path::PathBuf;

use presched_solver::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("system has no generators")]
    EmptySystem,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{0}` references unknown node `{1}`")]
    DanglingNodeReference(String, String),
    #[error("`{0}` must have positive capacity")]
    NonPositiveCapacity(String),
    #[error("generator `{0}`: up-regulation cost must exceed down-regulation cost")]
    UpCostNotAboveDownCost(String),
    #[error("invalid generator or line `{0}`: {1}")]
    InvalidComponent(String, String),
    #[error("prescription {value} MW outside [0, {capacity}] MW")]
    PrescriptionOutOfRange { value: f64, capacity: f64 },
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("no real Beta parameters for mean {mean} and sigma {sigma}")]
    NoRealSolution { mean: f64, sigma: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown fixture variant `{0}`")]
    UnknownVariant(String),
    #[error("missing capacity file {0}")]
    MissingCapacityFile(PathBuf),
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: cannot parse timestamp `{value}`")]
    UnparseableTimestamp { file: String, value: String },
    #[error("{file}: row {row} breaks the hourly cadence")]
    NonHourlyCadence { file: String, row: usize },
    #[error("{node}: field `{field}` has no values")]
    AllMissingField { node: String, field: String },
    #[error("series are not aligned in time: {0}")]
    TimestampMisalignment(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("baseline cost must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
