//! Synthetic data, the split evaluation protocol and Monte Carlo checks.

pub mod amse;
pub mod design;
pub mod split;

pub use amse::{
    amse_factor_check, error_scaling, variance_factors, AmseConfig, AmseReport, ErrorScaling,
    ScoreFunction, VarianceFactors,
};
pub use design::{
    beta, fourier_basis, generate_sample, BetaReading, ErrorModel, SyntheticData, SyntheticDesign,
};
pub use split::{
    quantile, split_experiment, ExperimentReport, FailedReplicate, ReplicateResult, SplitConfig,
    Target, VariantOutcome, VariantSummary,
};
