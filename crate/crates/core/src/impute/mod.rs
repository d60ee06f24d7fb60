//! Imputers fitted on a training matrix and applied unchanged to test data.

mod constant;
mod gaussian;
mod multiple;

pub use constant::{fit_constant, ConstantImputer, ConstantKind};
pub use gaussian::{
    conditional_gaussian, em_init, em_step, fit_gaussian_em, impute_conditional_mean, observed_loglik, shrink_covariance,
    ConditionalGaussian, EmConfig, EmFit, GaussianImputer, GaussianParams, ShrinkMode,
};
pub use multiple::{multiple_impute_matrix, multiple_impute_predict, multiple_impute_with, ConditionalSampler, GaussianSampler};
