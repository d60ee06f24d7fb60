//! Synthetic regression models and amputation mechanisms.
//!
//! Models 1-3 draw covariates from `N(1_d, ρ11ᵀ + (1-ρ)I)`. Model 4 builds
//! ten covariates as noisy nonlinear transforms of a hidden `U[-3, 0]`
//! variable. Responses are `f*(X) + ε` with `ε ~ N(0, noise_sd²)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::data::{IncompleteMatrix, TargetVector};
use crate::error::{Error, Result};
use crate::seed;

/// Coefficients of the linear model.
pub const LINEAR_BETA: [f64; 10] = [1.0, 2.0, -1.0, 3.0, -0.5, -1.0, 0.3, 1.7, 0.4, -0.3];

/// Per-feature noise sd of the nonlinear model.
pub const HIDDEN_FEATURE_SD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Quadratic,
    Linear,
    Friedman,
    NonlinearFriedman,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Quadratic => "quadratic",
            ModelKind::Linear => "linear",
            ModelKind::Friedman => "friedman",
            ModelKind::NonlinearFriedman => "nonlinear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ModelKind::Quadratic),
            "linear" => Ok(ModelKind::Linear),
            "friedman" => Ok(ModelKind::Friedman),
            "nonlinear" => Ok(ModelKind::NonlinearFriedman),
            other => Err(Error::InvalidParameter(format!("unknown model {other:?}"))),
        }
    }

    /// Whether covariates are the correlated Gaussian design.
    pub fn has_gaussian_covariates(self) -> bool {
        !matches!(self, ModelKind::NonlinearFriedman)
    }

    /// Noiseless regression function evaluated on a complete row.
    pub fn f_star(self, x: &[f64]) -> f64 {
        match self {
            ModelKind::Quadratic => x[0] * x[0],
            ModelKind::Linear => x.iter().zip(LINEAR_BETA).map(|(a, b)| a * b).sum(),
            ModelKind::Friedman => 10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4],
            ModelKind::NonlinearFriedman => (PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.5 * x[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d: usize,
    pub rho: f64,
    pub noise_sd: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, d: usize, rho: f64) -> Self {
        Self { kind, d, rho, noise_sd: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_d = match self.kind {
            ModelKind::Quadratic => self.d >= 1,
            ModelKind::Linear => self.d == 10,
            ModelKind::Friedman => self.d >= 5,
            ModelKind::NonlinearFriedman => self.d == 10,
        };
        if !ok_d {
            return Err(Error::InvalidParameter(format!("d = {} is not valid for the {} model", self.d, self.kind.name())));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho = {} must lie in [0, 1)", self.rho)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sd = {}", self.noise_sd)));
        }
        Ok(())
    }

    /// Mean and covariance of the Gaussian covariate design.
    pub fn gaussian_params(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.d;
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { self.rho });
        (vec![1.0; d], sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    Mcar { p: f64 },
    QuantileMnar { p: f64 },
    Predictive { p: f64, shift: f64 },
}

impl Mechanism {
    pub fn p(&self) -> f64 {
        match *self {
            Mechanism::Mcar { p } | Mechanism::QuantileMnar { p } | Mechanism::Predictive { p, .. } => p,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Mcar { .. } => "mcar",
            Mechanism::QuantileMnar { .. } => "mnar",
            Mechanism::Predictive { .. } => "predictive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmputationSpec {
    pub mechanism: Mechanism,
    pub target_columns: Vec<usize>,
}

impl AmputationSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        let p = self.mechanism.p();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p = {p} must lie in [0, 1]")));
        }
        if let Some(&j) = self.target_columns.iter().find(|&&j| j >= d) {
            return Err(Error::InvalidParameter(format!("target column {} out of range", j + 1)));
        }
        if matches!(self.mechanism, Mechanism::Predictive { .. }) && self.target_columns.len() != 1 {
            return Err(Error::InvalidParameter("predictive missingness takes exactly one column".into()));
        }
        Ok(())
    }
}

/// Features, response and the noiseless regression values.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: IncompleteMatrix,
    pub y: TargetVector,
    pub bayes_values: Option<Vec<f64>>,
}

/// Cholesky factor of the equicorrelated covariance.
fn equicorrelated_factor(d: usize, rho: f64) -> Result<DMatrix<f64>> {
    let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
    sigma.cholesky().map(|c| c.l()).ok_or_else(|| Error::Singular(format!("covariance with rho = {rho}")))
}

fn gaussian_rows<R: Rng>(n: usize, d: usize, rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    let l = equicorrelated_factor(d, rho)?;
    let mut out = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for r in 0..d {
            let mut acc = 1.0;
            for c in 0..=r {
                acc += l[(r, c)] * z[c];
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// `n` i.i.d. rows from `N(1_d, ρ11ᵀ + (1-ρ)I)`.
pub fn gen_gaussian_covariates(n: usize, d: usize, rho: f64, seed: u64) -> Result<IncompleteMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} must lie in [0, 1)")));
    }
    let mut rng = seed::rng(seed);
    let values = gaussian_rows(n, d, rho, &mut rng)?;
    IncompleteMatrix::complete(n, d, values)
}

/// Covariates of the nonlinear model as transforms of a hidden scalar.
pub fn hidden_transform(h: f64) -> [f64; 10] {
    [
        h * h,
        h.sin(),
        h.tanh() * h.exp() * h.sin(),
        (h - 1.0).sin() + (h - 3.0).cos().powi(3),
        (1.0 - h).powi(3),
        ((h * h).sin() + 2.0).sqrt(),
        h - 3.0,
        (1.0 - h) * h.sin() * h.cosh(),
        1.0 / ((2.0 * h).sin() - 2.0),
        h.powi(4),
    ]
}

/// Nonlinear model sample plus the hidden variable (kept out of the dataset).
pub fn gen_nonlinear_with_hidden(spec: &ModelSpec, n: usize, seed: u64) -> Result<(LabeledDataset, Vec<f64>)> {
    spec.validate()?;
    if spec.kind != ModelKind::NonlinearFriedman {
        return Err(Error::InvalidParameter("hidden variable exists only for the nonlinear model".into()));
    }
    let mut rng = seed::rng(seed);
    let mut hidden = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * 10);
    for _ in 0..n {
        let h: f64 = rng.random_range(-3.0..0.0);
        hidden.push(h);
        for v in hidden_transform(h) {
            let e: f64 = rng.sample(StandardNormal);
            values.push(v + HIDDEN_FEATURE_SD * e);
        }
    }
    let features = IncompleteMatrix::complete(n, 10, values)?;
    let ds = respond(spec, features, &mut rng)?;
    Ok((ds, hidden))
}

fn respond<R: Rng>(spec: &ModelSpec, features: IncompleteMatrix, rng: &mut R) -> Result<LabeledDataset> {
    let n = features.n();
    let mut y = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let v = spec.kind.f_star(features.row_values(i));
        let e: f64 = rng.sample(StandardNormal);
        f.push(v);
        y.push(v + spec.noise_sd * e);
    }
    Ok(LabeledDataset { features, y: TargetVector::new(y)?, bayes_values: Some(f) })
}

/// Draw `n` labelled rows from one of the four models.
pub fn gen_model(spec: &ModelSpec, n: usize, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if spec.kind == ModelKind::NonlinearFriedman {
        return gen_nonlinear_with_hidden(spec, n, seed).map(|(ds, _)| ds);
    }
    let mut rng = seed::rng(seed);
    let values = gaussian_rows(n, spec.d, spec.rho, &mut rng)?;
    let features = IncompleteMatrix::complete(n, spec.d, values)?;
    respond(spec, features, &mut rng)
}

/// Number of cells masked by the quantile mechanism on `n` distinct values.
pub fn quantile_mask_count(n: usize, p: f64) -> usize {
    // the epsilon absorbs representation error in p·n (e.g. 0.4·5)
    ((p * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Insert missing values with the MCAR or quantile-censoring mechanism.
pub fn ampute(x: &IncompleteMatrix, spec: &AmputationSpec, seed: u64) -> Result<IncompleteMatrix> {
    spec.validate(x.d())?;
    let (n, d) = (x.n(), x.d());
    for &j in &spec.target_columns {
        if (0..n).any(|i| x.is_missing(i, j)) {
            return Err(Error::InvalidParameter(format!("column {} already has missing values", j + 1)));
        }
    }
    let mut mask = x.mask().to_vec();
    match spec.mechanism {
        Mechanism::Mcar { p } => {
            let bern = Bernoulli::new(p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut rng = seed::rng(seed);
            // row-major draw order over targeted cells
            for i in 0..n {
                for &j in &spec.target_columns {
                    if bern.sample(&mut rng) {
                        mask[i * d + j] = true;
                    }
                }
            }
        }
        Mechanism::QuantileMnar { p } => {
            let k = quantile_mask_count(n, p);
            for &j in &spec.target_columns {
                if k == 0 {
                    continue;
                }
                let mut col: Vec<f64> = (0..n).map(|i| x.row_values(i)[j]).collect();
                col.sort_by(f64::total_cmp);
                if k >= n {
                    for i in 0..n {
                        mask[i * d + j] = true;
                    }
                    continue;
                }
                // order statistic of rank n - k (1-based); strictly larger values are masked
                let threshold = col[n - k - 1];
                for i in 0..n {
                    if x.row_values(i)[j] > threshold {
                        mask[i * d + j] = true;
                    }
                }
            }
        }
        Mechanism::Predictive { .. } => {
            return Err(Error::InvalidParameter("predictive missingness rewrites the response; use gen_predictive".into()))
        }
    }
    IncompleteMatrix::new(n, d, x.values().to_vec(), mask)
}

/// Noiseless response of the predictive-missingness model.
pub fn predictive_response(xj: f64, missing: bool, shift: f64) -> f64 {
    xj * xj + if missing { shift } else { 0.0 }
}

/// Quadratic-model sample where `M_j ~ B(p)` independent of X and
/// `y = x_j² + shift·m_j + ε`; column `j` is masked where `m_j = 1`.
pub fn gen_predictive(spec: &ModelSpec, n: usize, column: usize, p: f64, shift: f64, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    if spec.kind != ModelKind::Quadratic {
        return Err(Error::InvalidParameter("predictive missingness is defined on the quadratic model".into()));
    }
    if column >= spec.d {
        return Err(Error::InvalidParameter(format!("column {} out of range", column + 1)));
    }
    let bern = Bernoulli::new(p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let d = spec.d;
    let values = gaussian_rows(n, d, spec.rho, &mut rng)?;
    let mut mask = vec![false; n * d];
    let mut y = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let m = bern.sample(&mut rng);
        let v = predictive_response(values[i * d + column], m, shift);
        let e: f64 = rng.sample(StandardNormal);
        mask[i * d + column] = m;
        f.push(v);
        y.push(v + spec.noise_sd * e);
    }
    let features = IncompleteMatrix::new(n, d, values, mask)?;
    Ok(LabeledDataset { features, y: TargetVector::new(y)?, bayes_values: Some(f) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(m: &IncompleteMatrix, j: usize) -> Vec<f64> {
        (0..m.n()).map(|i| m.row_values(i)[j]).collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn independent_design_has_identity_covariance() {
        let m = gen_gaussian_covariates(10_000, 3, 0.0, 1).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let c = cov(&col(&m, a), &col(&m, b));
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((c - target).abs() < 0.05, "cov[{a}][{b}] = {c}");
            }
            assert!((mean(&col(&m, a)) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn correlated_design_matches_rho() {
        let m = gen_gaussian_covariates(10_000, 2, 0.9, 2).unwrap();
        let (a, b) = (col(&m, 0), col(&m, 1));
        let r = cov(&a, &b) / (cov(&a, &a) * cov(&b, &b)).sqrt();
        // sd of the sample correlation is (1-ρ²)/√n ≈ 0.0019
        assert!((r - 0.9).abs() < 0.02, "r = {r}");
    }

    #[test]
    fn experiment_one_design_is_valid() {
        let m = gen_gaussian_covariates(1000, 9, 0.5, 3).unwrap();
        assert_eq!((m.n(), m.d()), (1000, 9));
    }

    #[test]
    fn rho_one_rejected() {
        assert!(gen_gaussian_covariates(10, 2, 1.0, 0).is_err());
        assert!(ModelSpec::new(ModelKind::Linear, 9, 0.5).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Friedman, 4, 0.5).validate().is_err());
    }

    #[test]
    fn regression_functions() {
        assert_eq!(ModelKind::Quadratic.f_star(&[0.5, 9.0]), 0.25);
        let linear = ModelKind::Linear.f_star(&[1.0; 10]);
        assert!((linear - 5.6).abs() < 1e-12);
        let fr = ModelKind::Friedman.f_star(&[0.5; 5]);
        let expected = 10.0 * (PI / 4.0).sin() + 5.0 + 2.5;
        assert!((fr - expected).abs() < 1e-12);
        assert!((fr - 14.571).abs() < 1e-3);
    }

    #[test]
    fn model_generation_is_deterministic() {
        for kind in [ModelKind::Quadratic, ModelKind::Linear, ModelKind::Friedman, ModelKind::NonlinearFriedman] {
            let spec = ModelSpec::new(kind, 10, 0.5);
            let a = gen_model(&spec, 50, 9).unwrap();
            let b = gen_model(&spec, 50, 9).unwrap();
            assert_eq!(a, b);
            let f = a.bayes_values.as_ref().unwrap();
            for i in 0..50 {
                assert_eq!(f[i], kind.f_star(a.features.row_values(i)));
            }
        }
    }

    #[test]
    fn hidden_variable_structure() {
        let spec = ModelSpec::new(ModelKind::NonlinearFriedman, 10, 0.0);
        let (ds, h) = gen_nonlinear_with_hidden(&spec, 20_000, 4).unwrap();
        assert!(h.iter().all(|&v| (-3.0..0.0).contains(&v)));
        // slope of X1 on h² is 1
        let h2: Vec<f64> = h.iter().map(|v| v * v).collect();
        let x1 = col(&ds.features, 0);
        let slope = cov(&x1, &h2) / cov(&h2, &h2);
        assert!((slope - 1.0).abs() < 0.01, "slope = {slope}");
    }

    #[test]
    fn mcar_zero_is_noop() {
        let x = gen_gaussian_covariates(100, 3, 0.5, 5).unwrap();
        let spec = AmputationSpec { mechanism: Mechanism::Mcar { p: 0.0 }, target_columns: vec![0, 1, 2] };
        assert_eq!(ampute(&x, &spec, 1).unwrap(), x);
    }

    #[test]
    fn quantile_rule_on_five_points() {
        let x = IncompleteMatrix::complete(5, 1, vec![3.0, 1.0, 5.0, 2.0, 4.0]).unwrap();
        let spec = AmputationSpec { mechanism: Mechanism::QuantileMnar { p: 0.4 }, target_columns: vec![0] };
        let m = ampute(&x, &spec, 0).unwrap();
        let masked: Vec<bool> = (0..5).map(|i| m.is_missing(i, 0)).collect();
        assert_eq!(masked, vec![false, false, true, false, true]);
    }

    #[test]
    fn mcar_fraction_concentrates() {
        let x = gen_gaussian_covariates(5000, 2, 0.0, 6).unwrap();
        let spec = AmputationSpec { mechanism: Mechanism::Mcar { p: 0.2 }, target_columns: vec![0, 1] };
        let m = ampute(&x, &spec, 7).unwrap();
        let frac = m.missing_count() as f64 / 10_000.0;
        // binomial sd 0.004; band is 2.5 sd
        assert!((0.19..=0.21).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn mcar_mask_uncorrelated_with_features() {
        let n = 10_000;
        let x = gen_gaussian_covariates(n, 2, 0.5, 8).unwrap();
        let spec = AmputationSpec { mechanism: Mechanism::Mcar { p: 0.3 }, target_columns: vec![0] };
        let m = ampute(&x, &spec, 9).unwrap();
        let ind: Vec<f64> = (0..n).map(|i| if m.is_missing(i, 0) { 1.0 } else { 0.0 }).collect();
        for j in 0..2 {
            let c = col(&x, j);
            let r = cov(&ind, &c) / (cov(&ind, &ind) * cov(&c, &c)).sqrt();
            assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
        }
    }

    #[test]
    fn quantile_mask_separates_values() {
        let x = gen_gaussian_covariates(997, 2, 0.5, 10).unwrap();
        let spec = AmputationSpec { mechanism: Mechanism::QuantileMnar { p: 0.3 }, target_columns: vec![1] };
        let m = ampute(&x, &spec, 0).unwrap();
        let (mut lo_masked, mut hi_obs, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0);
        for i in 0..997 {
            let v = x.row_values(i)[1];
            if m.is_missing(i, 1) {
                lo_masked = lo_masked.min(v);
                count += 1;
            } else {
                hi_obs = hi_obs.max(v);
            }
        }
        assert!(lo_masked > hi_obs);
        assert_eq!(count, quantile_mask_count(997, 0.3));
    }

    #[test]
    fn predictive_rejected_by_ampute() {
        let x = gen_gaussian_covariates(10, 2, 0.0, 0).unwrap();
        let spec = AmputationSpec { mechanism: Mechanism::Predictive { p: 0.5, shift: 3.0 }, target_columns: vec![0] };
        assert!(ampute(&x, &spec, 0).is_err());
    }

    #[test]
    fn predictive_formula_and_shift() {
        let spec = ModelSpec { noise_sd: 0.0, ..ModelSpec::new(ModelKind::Quadratic, 3, 0.5) };
        let ds = gen_predictive(&spec, 100, 0, 1.0, 3.0, 1).unwrap();
        let f = ds.bayes_values.as_ref().unwrap();
        for i in 0..100 {
            assert!(ds.features.is_missing(i, 0));
            assert!(f[i] >= 3.0);
            assert_eq!(ds.y[i], f[i]);
        }
        assert_eq!(predictive_response(0.0, true, 3.0), 3.0);
        assert_eq!(predictive_response(2.0, false, 3.0), 4.0);
        let none = gen_predictive(&spec, 100, 0, 0.0, 3.0, 1).unwrap();
        assert!(none.features.is_complete());
    }

    #[test]
    fn predictive_mean_gap_is_shift() {
        let spec = ModelSpec::new(ModelKind::Quadratic, 2, 0.5);
        let ds = gen_predictive(&spec, 100_000, 0, 0.5, 3.0, 2).unwrap();
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..ds.y.len() {
            if ds.features.is_missing(i, 0) {
                s1 += ds.y[i];
                n1 += 1.0;
            } else {
                s0 += ds.y[i];
                n0 += 1.0;
            }
        }
        // Var(X²) = 6 for X ~ N(1,1): sd of the gap ≈ sqrt(12/50000) = 0.015
        let gap = s1 / n1 - s0 / n0;
        assert!((gap - 3.0).abs() < 0.08, "gap = {gap}");
    }
}
