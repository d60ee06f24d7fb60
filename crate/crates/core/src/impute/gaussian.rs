//! Multivariate Gaussian model for incomplete data: EM estimation,
//! observed-data log-likelihood, conditional laws and conditional-mean
//! imputation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{observed_stats, IncompleteMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch(format!("mean of length {d} with a {}x{} covariance", sigma.nrows(), sigma.ncols())));
        }
        Ok(Self { mu: DVector::from_vec(mu), sigma })
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }
}

/// Law of the missing block given the observed block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub missing_idx: Vec<usize>,
    pub mu_cond: DVector<f64>,
    pub sigma_cond: DMatrix<f64>,
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

fn sub_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |a, _| v[idx[a]])
}

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Singular(what.to_owned()))
}

/// Precomputed regression of the missing block on the observed block for
/// one missingness pattern.
#[derive(Debug, Clone)]
pub(crate) struct PatternSolver {
    pub observed: Vec<usize>,
    pub missing: Vec<usize>,
    mu_o: DVector<f64>,
    mu_m: DVector<f64>,
    /// Σ_mo Σ_oo⁻¹
    coef: DMatrix<f64>,
    /// Σ_mm − Σ_mo Σ_oo⁻¹ Σ_om
    pub cond_cov: DMatrix<f64>,
}

impl PatternSolver {
    pub fn new(params: &GaussianParams, missing_mask: &[bool]) -> Result<Self> {
        let observed: Vec<usize> = (0..params.d()).filter(|&j| !missing_mask[j]).collect();
        let missing: Vec<usize> = (0..params.d()).filter(|&j| missing_mask[j]).collect();
        let mu_o = sub_vec(&params.mu, &observed);
        let mu_m = sub_vec(&params.mu, &missing);
        let s_mm = sub(&params.sigma, &missing, &missing);
        if observed.is_empty() {
            return Ok(Self { coef: DMatrix::zeros(missing.len(), 0), cond_cov: s_mm, observed, missing, mu_o, mu_m });
        }
        let s_oo = sub(&params.sigma, &observed, &observed);
        let s_om = sub(&params.sigma, &observed, &missing);
        let c = chol(s_oo, "observed-block covariance")?;
        // Σ_oo⁻¹ Σ_om, transposed
        let coef = c.solve(&s_om).transpose();
        let cond_cov = &s_mm - &coef * &s_om;
        let cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;
        Ok(Self { observed, missing, mu_o, mu_m, coef, cond_cov })
    }

    /// Conditional mean of the missing block for a row's raw values.
    pub fn cond_mean(&self, row: &[f64]) -> DVector<f64> {
        if self.observed.is_empty() {
            return self.mu_m.clone();
        }
        let dev = DVector::from_fn(self.observed.len(), |a, _| row[self.observed[a]] - self.mu_o[a]);
        &self.mu_m + &self.coef * dev
    }
}

/// Conditional law of the unobserved coordinates given `observed_vals` at
/// `observed_idx`.
pub fn conditional_gaussian(params: &GaussianParams, observed_idx: &[usize], observed_vals: &[f64]) -> Result<ConditionalGaussian> {
    if observed_idx.len() != observed_vals.len() {
        return Err(Error::DimensionMismatch("observed indices and values differ in length".into()));
    }
    let d = params.d();
    let mut missing_mask = vec![true; d];
    let mut row = vec![0.0; d];
    for (&j, &v) in observed_idx.iter().zip(observed_vals) {
        if j >= d {
            return Err(Error::DimensionMismatch(format!("index {j} out of range")));
        }
        missing_mask[j] = false;
        row[j] = v;
    }
    let solver = PatternSolver::new(params, &missing_mask)?;
    Ok(ConditionalGaussian { mu_cond: solver.cond_mean(&row), sigma_cond: solver.cond_cov.clone(), missing_idx: solver.missing })
}

fn group_patterns(x: &IncompleteMatrix) -> BTreeMap<Vec<bool>, Vec<usize>> {
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..x.n() {
        groups.entry(x.row_mask(i).to_vec()).or_default().push(i);
    }
    groups
}

/// Log-likelihood of the observed entries, constant terms included.
pub fn observed_loglik(params: &GaussianParams, x: &IncompleteMatrix) -> Result<f64> {
    if x.d() != params.d() {
        return Err(Error::DimensionMismatch(format!("params for d = {}, data has d = {}", params.d(), x.d())));
    }
    let mut total = 0.0;
    for (pattern, rows) in group_patterns(x) {
        let observed: Vec<usize> = (0..x.d()).filter(|&j| !pattern[j]).collect();
        if observed.is_empty() {
            continue;
        }
        let c = chol(sub(&params.sigma, &observed, &observed), "marginal covariance")?;
        let logdet: f64 = 2.0 * c.l_dirty().diagonal().iter().take(observed.len()).map(|v| v.ln()).sum::<f64>();
        let k = observed.len() as f64;
        let mu_o = sub_vec(&params.mu, &observed);
        let mut quad = 0.0;
        for &i in &rows {
            let r = x.row_values(i);
            let dev = DVector::from_fn(observed.len(), |a, _| r[observed[a]] - mu_o[a]);
            let z = c.l().solve_lower_triangular(&dev).ok_or_else(|| Error::Singular("marginal covariance".into()))?;
            quad += z.norm_squared();
        }
        total += -0.5 * (rows.len() as f64 * (k * (2.0 * PI).ln() + logdet) + quad);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: GaussianParams,
    /// Observed log-likelihood of the initial parameters followed by one
    /// entry per completed iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting point: observed means and a diagonal of observed variances.
pub fn em_init(train: &IncompleteMatrix) -> Result<GaussianParams> {
    let d = train.d();
    let mut mu = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    for j in 0..d {
        let s = observed_stats(train, j)
            .filter(|s| s.observed_count >= 2)
            .ok_or_else(|| Error::InvalidParameter(format!("column {} has fewer than 2 observed values", j + 1)))?;
        let ss: f64 = (0..train.n()).filter_map(|i| train.get(i, j)).map(|v| (v - s.mean).powi(2)).sum();
        mu.push(s.mean);
        var.push(ss / s.observed_count as f64 + 1e-6);
    }
    GaussianParams::new(mu, DMatrix::from_diagonal(&DVector::from_vec(var)))
}

/// One E-step plus M-step.
pub fn em_step(params: &GaussianParams, x: &IncompleteMatrix) -> Result<GaussianParams> {
    let d = x.d();
    let n = x.n() as f64;
    let mut s1 = DVector::<f64>::zeros(d);
    let mut s2 = DMatrix::<f64>::zeros(d, d);
    let mut filled = DVector::<f64>::zeros(d);
    for (pattern, rows) in group_patterns(x) {
        let solver = PatternSolver::new(params, &pattern)?;
        let mut pattern_s2 = DMatrix::<f64>::zeros(d, d);
        for &i in &rows {
            let r = x.row_values(i);
            for j in 0..d {
                filled[j] = r[j];
            }
            if !solver.missing.is_empty() {
                let cm = solver.cond_mean(r);
                for (a, &j) in solver.missing.iter().enumerate() {
                    filled[j] = cm[a];
                }
            }
            s1 += &filled;
            pattern_s2.ger(1.0, &filled, &filled, 1.0);
        }
        // conditional covariance of the missing block, once per row
        let reps = rows.len() as f64;
        for (a, &ja) in solver.missing.iter().enumerate() {
            for (b, &jb) in solver.missing.iter().enumerate() {
                pattern_s2[(ja, jb)] += reps * solver.cond_cov[(a, b)];
            }
        }
        s2 += pattern_s2;
    }
    let mu = &s1 / n;
    let mut sigma = &s2 / n - &mu * mu.transpose();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(GaussianParams { mu, sigma })
}

/// Maximum-likelihood `(μ, Σ)` by EM. Stops when the observed
/// log-likelihood gains less than `tol` in one iteration.
pub fn fit_gaussian_em(train: &IncompleteMatrix, config: EmConfig) -> Result<EmFit> {
    if train.n() < 2 {
        return Err(Error::InvalidParameter("EM needs at least two rows".into()));
    }
    let mut params = em_init(train)?;
    let mut prev = observed_loglik(&params, train)?;
    let mut trace = vec![prev];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let next = em_step(&params, train)?;
        let ll = observed_loglik(&next, train)?;
        params = next;
        trace.push(ll);
        iterations += 1;
        if ll - prev < config.tol {
            converged = true;
            break;
        }
        prev = ll;
    }
    Ok(EmFit { params, trace, iterations, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShrinkMode {
    /// `0.99 Σ + 0.01 tr(Σ) I`
    #[default]
    Trace,
    /// `0.99 Σ + 0.01 (tr(Σ)/d) I`
    MeanTrace,
}

/// Covariance shrinkage applied before imputing.
pub fn shrink_covariance(sigma: &DMatrix<f64>, mode: ShrinkMode) -> DMatrix<f64> {
    let d = sigma.nrows();
    let mut tr = sigma.trace();
    if mode == ShrinkMode::MeanTrace && d > 0 {
        tr /= d as f64;
    }
    sigma * 0.99 + DMatrix::<f64>::identity(d, d) * (0.01 * tr)
}

/// Fill every missing block with its conditional mean.
pub fn impute_conditional_mean(params: &GaussianParams, x: &IncompleteMatrix) -> Result<IncompleteMatrix> {
    if x.d() != params.d() {
        return Err(Error::DimensionMismatch(format!("params for d = {}, data has d = {}", params.d(), x.d())));
    }
    let d = x.d();
    let mut values = x.values().to_vec();
    for (pattern, rows) in group_patterns(x) {
        if !pattern.iter().any(|&m| m) {
            continue;
        }
        let solver = PatternSolver::new(params, &pattern)?;
        for &i in &rows {
            let cm = solver.cond_mean(x.row_values(i));
            for (a, &j) in solver.missing.iter().enumerate() {
                values[i * d + j] = cm[a];
            }
        }
    }
    IncompleteMatrix::complete(x.n(), d, values)
}

/// EM fit, shrinkage and the fitted parameters ready for imputation.
#[derive(Debug, Clone)]
pub struct GaussianImputer {
    pub params: GaussianParams,
    pub em: EmFit,
}

impl GaussianImputer {
    pub fn fit(train: &IncompleteMatrix, config: EmConfig, mode: ShrinkMode) -> Result<Self> {
        let em = fit_gaussian_em(train, config)?;
        let params = GaussianParams { mu: em.params.mu.clone(), sigma: shrink_covariance(&em.params.sigma, mode) };
        Ok(Self { params, em })
    }

    pub fn transform(&self, x: &IncompleteMatrix) -> Result<IncompleteMatrix> {
        impute_conditional_mean(&self.params, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_gaussian_covariates;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn complete_data_one_iteration_is_mle() {
        let x = gen_gaussian_covariates(200, 3, 0.5, 1).unwrap();
        let fit = fit_gaussian_em(&x, EmConfig { max_iter: 1, tol: 1e-8 }).unwrap();
        let n = x.n() as f64;
        for a in 0..3 {
            let ma: f64 = (0..x.n()).map(|i| x.row_values(i)[a]).sum::<f64>() / n;
            assert!(approx(fit.params.mu[a], ma, 1e-12));
            for b in 0..3 {
                let mb: f64 = (0..x.n()).map(|i| x.row_values(i)[b]).sum::<f64>() / n;
                let c: f64 = (0..x.n()).map(|i| (x.row_values(i)[a] - ma) * (x.row_values(i)[b] - mb)).sum::<f64>() / n;
                assert!(approx(fit.params.sigma[(a, b)], c, 1e-10));
            }
        }
    }

    #[test]
    fn loglik_of_fully_missing_row_is_zero() {
        let p = GaussianParams::new(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let x = IncompleteMatrix::from_rows(&[vec![None, None]]).unwrap();
        assert_eq!(observed_loglik(&p, &x).unwrap(), 0.0);
    }

    #[test]
    fn loglik_at_mode() {
        let p = GaussianParams::new(vec![0.7], DMatrix::identity(1, 1)).unwrap();
        let x = IncompleteMatrix::complete(1, 1, vec![0.7]).unwrap();
        assert!(approx(observed_loglik(&p, &x).unwrap(), -0.5 * (2.0 * PI).ln(), 1e-14));
    }

    #[test]
    fn loglik_singular_marginal() {
        let p = GaussianParams::new(vec![0.0, 0.0], DMatrix::from_element(2, 2, 1.0)).unwrap();
        let x = IncompleteMatrix::complete(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(observed_loglik(&p, &x), Err(Error::Singular(_))));
    }

    #[test]
    fn em_trace_nondecreasing_and_above_init() {
        let x = gen_gaussian_covariates(300, 4, 0.6, 2).unwrap();
        let mut mask = vec![false; 300 * 4];
        for i in 0..300 {
            for j in 0..4 {
                mask[i * 4 + j] = (i * 7 + j * 3) % 5 == 0;
            }
        }
        let xm = IncompleteMatrix::new(300, 4, x.values().to_vec(), mask).unwrap();
        let fit = fit_gaussian_em(&xm, EmConfig::default()).unwrap();
        assert!(fit.converged);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        let init = observed_loglik(&em_init(&xm).unwrap(), &xm).unwrap();
        assert!(*fit.trace.last().unwrap() >= init);
        // fixed point
        let again = em_step(&fit.params, &xm).unwrap();
        let delta = (&again.sigma - &fit.params.sigma).amax().max((&again.mu - &fit.params.mu).amax());
        assert!(delta < 1e-4, "delta {delta}");
    }

    #[test]
    fn em_rejects_sparse_columns() {
        let x = IncompleteMatrix::from_rows(&[vec![Some(1.0), None], vec![Some(2.0), Some(1.0)], vec![Some(3.0), None]]).unwrap();
        assert!(fit_gaussian_em(&x, EmConfig::default()).is_err());
    }

    #[test]
    fn conditional_independent() {
        let p = GaussianParams::new(vec![1.0, 2.0, 3.0], DMatrix::identity(3, 3)).unwrap();
        let c = conditional_gaussian(&p, &[0], &[10.0]).unwrap();
        assert_eq!(c.missing_idx, vec![1, 2]);
        assert_eq!(c.mu_cond.as_slice(), &[2.0, 3.0]);
        assert_eq!(c.sigma_cond, DMatrix::identity(2, 2));
    }

    #[test]
    fn conditional_bivariate_regression() {
        let (m1, m2, s11, s12, s22) = (0.5, -1.0, 2.0, 0.8, 1.5);
        let p = GaussianParams::new(vec![m1, m2], DMatrix::from_row_slice(2, 2, &[s11, s12, s12, s22])).unwrap();
        let x1 = 1.7;
        let c = conditional_gaussian(&p, &[0], &[x1]).unwrap();
        assert!(approx(c.mu_cond[0], m2 + s12 / s11 * (x1 - m1), 1e-14));
        assert!(approx(c.sigma_cond[(0, 0)], s22 - s12 * s12 / s11, 1e-14));
    }

    #[test]
    fn conditional_without_missing_is_empty() {
        let p = GaussianParams::new(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let c = conditional_gaussian(&p, &[0, 1], &[1.0, 2.0]).unwrap();
        assert!(c.missing_idx.is_empty());
        assert_eq!(c.mu_cond.len(), 0);
    }

    #[test]
    fn conditional_singular() {
        let p = GaussianParams::new(vec![0.0; 3], DMatrix::from_element(3, 3, 1.0)).unwrap();
        assert!(matches!(conditional_gaussian(&p, &[0, 1], &[0.0, 0.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn shrinkage_formula() {
        let s = shrink_covariance(&DMatrix::identity(2, 2), ShrinkMode::Trace);
        assert!(approx(s[(0, 0)], 1.01, 1e-15) && s[(0, 1)] == 0.0);
        assert_eq!(shrink_covariance(&DMatrix::zeros(3, 3), ShrinkMode::Trace), DMatrix::zeros(3, 3));
        let rank1 = DMatrix::from_element(3, 3, 1.0);
        let sh = shrink_covariance(&rank1, ShrinkMode::Trace);
        let min_eig = sh.symmetric_eigen().eigenvalues.min();
        assert!(approx(min_eig, 0.03, 1e-12));
        let mt = shrink_covariance(&rank1, ShrinkMode::MeanTrace);
        assert!(approx(mt.symmetric_eigen().eigenvalues.min(), 0.01, 1e-12));
    }

    #[test]
    fn conditional_mean_imputation() {
        let p = GaussianParams::new(vec![1.0, -1.0], DMatrix::identity(2, 2)).unwrap();
        let x = IncompleteMatrix::from_rows(&[vec![None, Some(5.0)], vec![Some(3.0), None], vec![None, None]]).unwrap();
        let out = impute_conditional_mean(&p, &x).unwrap();
        assert_eq!(out.row(0), vec![Some(1.0), Some(5.0)]);
        assert_eq!(out.row(1), vec![Some(3.0), Some(-1.0)]);
        assert_eq!(out.row(2), vec![Some(1.0), Some(-1.0)]);
        let complete = IncompleteMatrix::complete(1, 2, vec![4.0, 4.0]).unwrap();
        assert_eq!(impute_conditional_mean(&p, &complete).unwrap(), complete);
    }

    #[test]
    fn duplicated_feature_is_recovered() {
        let base = gen_gaussian_covariates(500, 2, 0.3, 3).unwrap();
        let mut rows = Vec::new();
        for i in 0..500 {
            let (a, b) = (base.row_values(i)[0], base.row_values(i)[1]);
            // near-exact copy keeps the MLE covariance nonsingular
            let copy = a + 1e-4 * (i as f64).sin();
            rows.push(vec![Some(a), if i % 4 == 0 { None } else { Some(copy) }, Some(b)]);
        }
        let x = IncompleteMatrix::from_rows(&rows).unwrap();
        let fit = fit_gaussian_em(&x, EmConfig { max_iter: 2000, tol: 1e-10 }).unwrap();
        let out = impute_conditional_mean(&fit.params, &x).unwrap();
        for i in (0..500).step_by(4) {
            let (x1, x2) = (out.row_values(i)[0], out.row_values(i)[1]);
            assert!(approx(x2, x1, 1e-3), "row {i}: {x1} vs {x2}");
        }
    }
}
