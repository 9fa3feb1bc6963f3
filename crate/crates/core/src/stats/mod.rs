//! Validation statistics: distribution fitting with KS model selection,
//! global Moran's I, two-sample KS and Pearson correlation.

pub mod correlation;
pub mod fit;
pub mod ks;
pub mod moran;
mod special;

use thiserror::Error;

pub use correlation::{pearson_r, PearsonResult};
pub use fit::{
    fit_distribution, select_best_family, DistributionFit, Family, FamilyRanking, FitParams,
};
pub use ks::{one_sample_ks, two_sample_ks, KsResult};
pub use moran::{morans_i, MoranResult, SpatialWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("sample has zero variance")]
    DegenerateSample,
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("value field has zero variance")]
    ZeroVariance,
    #[error("too few units: need at least 3, got {0}")]
    TooFewUnits(usize),
    #[error("input is constant")]
    ConstantInput,
    #[error("too few points: need at least 4, got {0}")]
    TooFewPoints(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no value for unit '{0}'")]
    MissingValue(String),
    #[error("fit did not converge: {0}")]
    FitFailed(String),
    #[error("unknown distribution family '{0}'")]
    UnknownFamily(String),
}
