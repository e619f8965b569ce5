//! Prediction in the functional linear model `Y = alpha + int beta X + e`
//! with principal-component series estimators, unweighted and weighted
//! for heteroscedastic errors.

pub mod curves;
pub mod error;
pub mod fpca;
pub mod io;
pub mod linmodel;
pub mod selection;
pub mod simharness;
pub mod varmodel;
pub mod wls;

pub use curves::{Curve, Grid, Sample};
pub use error::{Error, Result};
pub use fpca::{empirical_pca, weighted_pca, Flavor, PcBasis};
pub use linmodel::{fit_unweighted, LinearFit};
pub use selection::{cross_validate, fit_pipeline, fit_with_cv, CvConfig, CvResult, Pipeline};
pub use varmodel::{fit_power_of_mean, VarianceConfig, VarianceModel};
pub use wls::{fit_weighted_check, fit_weighted_tilde, Variant, WeightedFit};
