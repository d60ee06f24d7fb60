//! Conditional multiple imputation at prediction time: average a predictor
//! over draws of the missing block from its conditional law.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::gaussian::{GaussianParams, PatternSolver};
use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;

/// Source of draws for the missing coordinates of a row.
pub trait ConditionalSampler {
    /// Overwrite the masked entries of `row` with one conditional draw.
    fn fill_missing<R: Rng>(&self, row: &mut [f64], missing: &[bool], rng: &mut R) -> Result<()>;
}

/// Gaussian sampler with per-pattern Cholesky factors cached.
pub struct GaussianSampler<'a> {
    params: &'a GaussianParams,
    cache: std::cell::RefCell<HashMap<Vec<bool>, (PatternSolver, DMatrix<f64>)>>,
}

impl<'a> GaussianSampler<'a> {
    pub fn new(params: &'a GaussianParams) -> Self {
        Self { params, cache: Default::default() }
    }
}

impl ConditionalSampler for GaussianSampler<'_> {
    fn fill_missing<R: Rng>(&self, row: &mut [f64], missing: &[bool], rng: &mut R) -> Result<()> {
        let mut cache = self.cache.borrow_mut();
        if !cache.contains_key(missing) {
            let solver = PatternSolver::new(self.params, missing)?;
            let k = solver.missing.len();
            let l = if k == 0 {
                DMatrix::zeros(0, 0)
            } else {
                solver.cond_cov.clone().cholesky().map(|c| c.l()).ok_or_else(|| Error::Singular("conditional covariance".into()))?
            };
            cache.insert(missing.to_vec(), (solver, l));
        }
        let (solver, l) = &cache[missing];
        let k = solver.missing.len();
        if k == 0 {
            return Ok(());
        }
        let mean = solver.cond_mean(row);
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for (a, &j) in solver.missing.iter().enumerate() {
            let mut v = mean[a];
            for (b, zb) in z.iter().enumerate().take(a + 1) {
                v += l[(a, b)] * zb;
            }
            row[j] = v;
        }
        Ok(())
    }
}

/// `(1/K) Σ_k f(x_o, X_m^(k))`; rows without missing entries return `f(x)`.
pub fn multiple_impute_with<S, F>(sampler: &S, f: F, row: &[Option<f64>], k: usize, seed: u64) -> Result<f64>
where
    S: ConditionalSampler,
    F: Fn(&[f64]) -> f64,
{
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let missing: Vec<bool> = row.iter().map(Option::is_none).collect();
    let mut buf: Vec<f64> = row.iter().map(|v| v.unwrap_or(0.0)).collect();
    if !missing.iter().any(|&m| m) {
        return Ok(f(&buf));
    }
    let mut rng = seed::rng(seed);
    let mut acc = 0.0;
    for _ in 0..k {
        sampler.fill_missing(&mut buf, &missing, &mut rng)?;
        acc += f(&buf);
    }
    Ok(acc / k as f64)
}

/// Multiple-imputation prediction for one row under a Gaussian model.
pub fn multiple_impute_predict<F>(params: &GaussianParams, f: F, row: &[Option<f64>], k: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if row.len() != params.d() {
        return Err(Error::DimensionMismatch(format!("row of length {} for d = {}", row.len(), params.d())));
    }
    multiple_impute_with(&GaussianSampler::new(params), f, row, k, seed)
}

/// Row-wise multiple imputation over a matrix; row i uses the stream
/// derived from `(seed, i)`.
pub fn multiple_impute_matrix<F>(params: &GaussianParams, f: F, x: &IncompleteMatrix, k: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if x.d() != params.d() {
        return Err(Error::DimensionMismatch(format!("data has d = {}, params d = {}", x.d(), params.d())));
    }
    let sampler = GaussianSampler::new(params);
    (0..x.n()).map(|i| multiple_impute_with(&sampler, &f, &x.row(i), k, seed::derive(seed, &[i as u64]))).collect()
}
