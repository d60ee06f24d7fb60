//! Bayes-rate estimation by multiple imputation with the true model.

use super::r2_score;
use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::impute::{multiple_impute_matrix, GaussianParams};
use crate::seed::{self, tag};
use crate::synth::{ampute, gen_model, AmputationSpec, Mechanism, ModelSpec};

fn true_params(model: &ModelSpec) -> Result<GaussianParams> {
    if !model.kind.has_gaussian_covariates() {
        return Err(Error::InvalidParameter(format!("no Bayes rate for the {} model: its covariates are not Gaussian", model.kind.name())));
    }
    let (mu, sigma) = model.gaussian_params();
    GaussianParams::new(mu, sigma)
}

/// `E[f*(X) | observed part]` for every row, averaged over `k` conditional
/// draws under the true covariate law.
pub fn bayes_predictions(model: &ModelSpec, x: &IncompleteMatrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    let params = true_params(model)?;
    let kind = model.kind;
    multiple_impute_matrix(&params, |row| kind.f_star(row), x, k, seed)
}

/// R² of the Bayes predictor on a fresh sample of `n_large` rows with MCAR
/// missingness.
pub fn estimate_bayes_rate(model: &ModelSpec, pattern: &AmputationSpec, n_large: usize, k: usize, seed: u64) -> Result<f64> {
    true_params(model)?;
    if !matches!(pattern.mechanism, Mechanism::Mcar { .. }) {
        return Err(Error::InvalidParameter("the Bayes rate is estimated for MCAR patterns only".into()));
    }
    let mut ds = gen_model(model, n_large, seed::derive(seed, &[tag::TRAIN]))?;
    ds.features = ampute(&ds.features, pattern, seed::derive(seed, &[tag::AMPUTE_TRAIN]))?;
    let pred = bayes_predictions(model, &ds.features, k, seed::derive(seed, &[tag::DRAWS]))?;
    r2_score(&ds.y, &pred)
}
