use thiserror::Error;

use crate::types::ExposureSet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite {what} value at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("exposure column {col} ({name}) is constant")]
    ConstantExposure { col: usize, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coincident spline knots for exposure column {col}; reduce the degrees of freedom")]
    CoincidentKnots { col: usize },

    #[error("posterior precision for active set {subset} is not positive definite")]
    NotPositiveDefinite { subset: ExposureSet },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("sampler failed at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degrees of freedom {df}: {source}")]
    AtDegreesOfFreedom {
        df: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
