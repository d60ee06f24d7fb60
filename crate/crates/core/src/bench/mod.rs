//! Simulation harness: generate, ampute, impute or route, fit, score.
//!
//! Every repetition draws its own training and test sets from streams
//! derived from the master seed, so records do not depend on the order in
//! which repetitions run. Method `k` of repetition `r` fits with the stream
//! `derive(master, [r, k, FIT])` and predicts with
//! `derive(master, [r, k, PREDICT])`.

mod bayes;
mod output;
mod selection;
mod svg;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::data::IncompleteMatrix;
use crate::ensemble::{fit_boosting, fit_forest, BoostParams, EnsembleModel, ForestParams};
use crate::error::{Error, Result};
use crate::impute::{fit_constant, ConstantImputer, ConstantKind, EmConfig, GaussianImputer, ShrinkMode};
use crate::seed::{self, tag};
use crate::synth::{ampute, gen_model, gen_predictive, AmputationSpec, LabeledDataset, Mechanism, ModelSpec};
use crate::tree::{fit_tree, ProbMode, Strategy, TreeModel, TreeParams};

pub use bayes::estimate_bayes_rate;
pub use output::{emit_csv, read_csv, write_csv, CSV_HEADER};
pub use selection::{selection_frequency_experiment, MissingOn, SelectionRow};
pub use svg::{emit_svg, render_box, render_curves, PlotKind, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Learner {
    Tree,
    Forest,
    Boost,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Tree => "tree",
            Learner::Forest => "forest",
            Learner::Boost => "boost",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(Learner::Tree),
            "forest" => Ok(Learner::Forest),
            "boost" => Ok(Learner::Boost),
            other => Err(Error::InvalidParameter(format!("unknown learner {other:?}"))),
        }
    }
}

/// The closed set of pipelines the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mia,
    Surrogate,
    Prob,
    Block,
    ImputeMean { mask: bool },
    ImputeOor { mask: bool },
    ImputeGaussian,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Mia,
        Method::Surrogate,
        Method::Prob,
        Method::Block,
        Method::ImputeMean { mask: false },
        Method::ImputeMean { mask: true },
        Method::ImputeOor { mask: false },
        Method::ImputeOor { mask: true },
        Method::ImputeGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mia => "mia",
            Method::Surrogate => "surrogate",
            Method::Prob => "prob",
            Method::Block => "block",
            Method::ImputeMean { mask: false } => "impute_mean",
            Method::ImputeMean { mask: true } => "impute_mean+mask",
            Method::ImputeOor { mask: false } => "impute_oor",
            Method::ImputeOor { mask: true } => "impute_oor+mask",
            Method::ImputeGaussian => "impute_gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub pattern: AmputationSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub reps: usize,
    pub learner: Learner,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Worker threads for repetitions; records do not depend on it.
    pub threads: usize,
    /// Record wall-clock timings. Off by default so that output bytes only
    /// depend on the configuration and seed.
    pub timings: bool,
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub boost: BoostParams,
}

impl ExperimentConfig {
    pub fn new(
        model: ModelSpec,
        pattern: AmputationSpec,
        n: usize,
        reps: usize,
        learner: Learner,
        methods: Vec<Method>,
        master_seed: u64,
    ) -> Self {
        Self {
            model,
            pattern,
            n_train: n,
            n_test: n,
            reps,
            learner,
            methods,
            master_seed,
            threads: 1,
            timings: false,
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            boost: BoostParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter("train and test sizes must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        self.model.validate()?;
        self.pattern.validate(self.model.d)
    }
}

/// One (repetition, method) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rep: usize,
    pub method: String,
    pub learner: String,
    pub model: String,
    pub pattern: String,
    pub p: f64,
    pub rho: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub r2: f64,
    pub fit_ms: u64,
    pub predict_ms: u64,
}

/// `1 - Σ(y - ŷ)² / Σ(y - ȳ)²`.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!("{} targets, {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::Empty("R² of an empty sample".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let tss: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if tss <= 0.0 {
        return Err(Error::Degenerate("target has zero variance".into()));
    }
    let rss: f64 = y_true.iter().zip(y_pred).map(|(y, f)| (y - f).powi(2)).sum();
    Ok(1.0 - rss / tss)
}

/// Records with `r2` replaced by its deviation from the mean over the
/// methods of the same repetition (and learner). Every repetition must hold
/// the same set of methods, each exactly once.
pub fn relative_scores(records: &[RunRecord]) -> Result<Vec<RunRecord>> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.learner.as_str(), r.rep)).or_default().push(i);
    }
    let mut reference: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut out = records.to_vec();
    for ((learner, rep), idx) in &groups {
        let mut names: Vec<&str> = idx.iter().map(|&i| records[i].method.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("repetition {rep} lists a method twice")));
        }
        let expected = reference.entry(learner).or_insert_with(|| names.clone());
        if *expected != names {
            return Err(Error::InvalidParameter(format!("repetition {rep} does not hold the same methods as the others")));
        }
        let mean = idx.iter().map(|&i| records[i].r2).sum::<f64>() / idx.len() as f64;
        for &i in idx {
            out[i].r2 = records[i].r2 - mean;
        }
    }
    Ok(out)
}

/// One-sided sign test of `a > b` on paired samples. Ties are dropped.
/// Returns the p-value `P(Bin(m, 1/2) ≥ wins)` with `m` the untied pairs.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} paired values", a.len(), b.len())));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count() as u64;
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count() as u64;
    binomial_upper_tail(wins, wins + losses, 0.5)
}

/// `P(Bin(m, q) ≥ k)`.
pub fn binomial_upper_tail(k: u64, m: u64, q: f64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let bin = Binomial::new(q, m).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(bin.sf(k - 1))
}

/// `P(Bin(m, q) ≤ k)`.
pub fn binomial_lower_tail(k: u64, m: u64, q: f64) -> Result<f64> {
    let bin = Binomial::new(q, m).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(bin.cdf(k))
}

/// Median by linear interpolation between order statistics.
pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Sample quantile with linear interpolation (the usual "type 7").
pub fn quantile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Values of `r2` for one method, ordered by repetition.
pub fn scores_of(records: &[RunRecord], method: &str) -> Vec<f64> {
    let mut v: Vec<(usize, f64)> = records.iter().filter(|r| r.method == method).map(|r| (r.rep, r.r2)).collect();
    v.sort_by_key(|&(rep, _)| rep);
    v.into_iter().map(|(_, r)| r).collect()
}

/// Training and test sets of one repetition.
pub(crate) fn draw(model: &ModelSpec, pattern: &AmputationSpec, n: usize, seed_data: u64, seed_ampute: u64) -> Result<LabeledDataset> {
    match pattern.mechanism {
        Mechanism::Predictive { p, shift } => gen_predictive(model, n, pattern.target_columns[0], p, shift, seed_data),
        _ => {
            let mut ds = gen_model(model, n, seed_data)?;
            ds.features = ampute(&ds.features, pattern, seed_ampute)?;
            Ok(ds)
        }
    }
}

enum Prep {
    Raw,
    Constant(ConstantImputer, bool),
    Gaussian(GaussianImputer),
}

impl Prep {
    fn fit(method: Method, train: &IncompleteMatrix) -> Result<Self> {
        Ok(match method {
            Method::ImputeMean { mask } => Prep::Constant(fit_constant(train, ConstantKind::Mean)?, mask),
            Method::ImputeOor { mask } => Prep::Constant(fit_constant(train, ConstantKind::OutOfRange)?, mask),
            Method::ImputeGaussian => Prep::Gaussian(GaussianImputer::fit(train, EmConfig::default(), ShrinkMode::Trace)?),
            _ => Prep::Raw,
        })
    }

    fn apply(&self, x: &IncompleteMatrix) -> Result<IncompleteMatrix> {
        match self {
            Prep::Raw => Ok(x.clone()),
            Prep::Constant(imp, mask) => imp.transform(x, *mask),
            Prep::Gaussian(imp) => imp.transform(x),
        }
    }
}

/// Strategy used by a method. Imputed inputs are complete, where all
/// strategies grow the same tree; MIA is used there.
fn strategy_of(method: Method) -> Strategy {
    match method {
        Method::Surrogate => Strategy::ObservedSurrogate,
        Method::Prob => Strategy::ObservedProbabilistic,
        Method::Block => Strategy::ObservedBlock,
        _ => Strategy::Mia,
    }
}

enum Fitted {
    Tree(TreeModel),
    Ensemble(EnsembleModel),
}

impl Fitted {
    fn predict(&self, x: &IncompleteMatrix, seed: u64) -> Result<Vec<f64>> {
        match self {
            Fitted::Tree(t) => t.predict_matrix(x, seed, ProbMode::Stochastic),
            Fitted::Ensemble(e) => e.predict_matrix(x, seed, ProbMode::Stochastic),
        }
    }
}

fn fit_learner(cfg: &ExperimentConfig, x: &IncompleteMatrix, y: &[f64], strategy: Strategy, seed: u64) -> Result<Fitted> {
    Ok(match cfg.learner {
        Learner::Tree => Fitted::Tree(fit_tree(x, y, strategy, &cfg.tree, seed)?),
        Learner::Forest => Fitted::Ensemble(EnsembleModel::Forest(fit_forest(x, y, strategy, &cfg.forest, seed)?)),
        Learner::Boost => Fitted::Ensemble(EnsembleModel::Boost(fit_boosting(x, y, strategy, &cfg.boost, seed)?)),
    })
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// All methods of one repetition. Models are fitted before the test set is
/// drawn.
fn run_rep(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<RunRecord>> {
    let r = rep as u64;
    let s = cfg.master_seed;
    let train = draw(&cfg.model, &cfg.pattern, cfg.n_train, seed::derive(s, &[r, tag::TRAIN]), seed::derive(s, &[r, tag::AMPUTE_TRAIN]))?;
    let mut fitted = Vec::with_capacity(cfg.methods.len());
    for (k, &method) in cfg.methods.iter().enumerate() {
        let start = Instant::now();
        let prep = Prep::fit(method, &train.features).map_err(|e| Error::InvalidParameter(format!("rep {rep}, {}: {e}", method.name())))?;
        let x = prep.apply(&train.features)?;
        let fit_seed = seed::derive(s, &[r, k as u64, tag::FIT]);
        let model = fit_learner(cfg, &x, &train.y, strategy_of(method), fit_seed)
            .map_err(|e| Error::InvalidParameter(format!("rep {rep}, {}: {e}", method.name())))?;
        fitted.push((prep, model, elapsed_ms(start)));
    }
    drop(train);
    let test = draw(&cfg.model, &cfg.pattern, cfg.n_test, seed::derive(s, &[r, tag::TEST]), seed::derive(s, &[r, tag::AMPUTE_TEST]))?;
    let mut out = Vec::with_capacity(cfg.methods.len());
    for (k, (&method, (prep, model, fit_ms))) in cfg.methods.iter().zip(&fitted).enumerate() {
        let start = Instant::now();
        let x = prep.apply(&test.features)?;
        let pred = model.predict(&x, seed::derive(s, &[r, k as u64, tag::PREDICT]))?;
        let predict_ms = elapsed_ms(start);
        let r2 = r2_score(&test.y, &pred)?;
        out.push(RunRecord {
            rep,
            method: method.name().to_owned(),
            learner: cfg.learner.name().to_owned(),
            model: cfg.model.kind.name().to_owned(),
            pattern: cfg.pattern.mechanism.name().to_owned(),
            p: cfg.pattern.mechanism.p(),
            rho: cfg.model.rho,
            n_train: cfg.n_train,
            n_test: cfg.n_test,
            r2,
            fit_ms: if cfg.timings { *fit_ms } else { 0 },
            predict_ms: if cfg.timings { predict_ms } else { 0 },
        });
    }
    Ok(out)
}

/// Runs every repetition and returns records ordered by (rep, method).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<RunRecord>> =
        pool.install(|| (0..cfg.reps).into_par_iter().map(|rep| run_rep(cfg, rep)).collect::<Result<_>>())?;
    Ok(per_rep.into_iter().flatten().collect())
}
