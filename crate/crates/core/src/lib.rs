//! Bayesian semiparametric regression with multivariate spike-and-slab
//! priors for detecting main effects and interactions among exposures.

pub mod basis;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod hyper;
pub mod pipeline;
pub mod priors;
pub mod sampler;
pub mod simgen;
pub mod summaries;
pub mod types;

pub use error::{Error, Result};
pub use pipeline::{fit, select_df, FitConfig, FitResult, SelectDfResult, SlabVariance};
pub use types::{
    check_zeta_constraint, validate_dataset, ChainSamples, Dataset, ExposureSet, ModelState,
    PriorConfig, ZetaMatrix,
};
