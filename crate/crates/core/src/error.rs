use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series must have at least one coefficient")]
    Empty,
    #[error("series degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("requested derivative order {requested} exceeds supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("unsupported activation `{0}`")]
    UnsupportedActivation(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no training samples")]
    NoSamples,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("meta-data grid has zero size")]
    EmptyGrid,
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("unstable configuration: {0}")]
    Stability(String),
    #[error("invalid problem configuration: {0}")]
    Config(String),
    #[error("integration diverged at step {step}")]
    Divergence { step: usize },
    #[error("sample count {requested} outside 1..={available}")]
    SampleCount { requested: usize, available: usize },
    #[error("malformed field file: {0}")]
    Format(String),
}

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("invalid genome: {0}")]
    Invalid(String),
    #[error("cannot parse genome `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error("coefficient count {coeffs} does not match module count {modules}")]
    CoefficientCount { coeffs: usize, modules: usize },
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("{axis} derivative of order {order} requested but the dataset only holds up to {available}")]
    MissingOrder {
        axis: &'static str,
        order: usize,
        available: usize,
    },
}

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("under-determined system: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("target length {target} does not match {rows} design rows")]
    RowMismatch { target: usize, rows: usize },
    #[error("invalid regression parameters: {0}")]
    Parameter(String),
}

/// Crate-level error used by the GA and the experiment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
