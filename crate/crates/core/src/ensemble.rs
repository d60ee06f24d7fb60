//! Bagged forests and least-squares gradient boosting built from the trees
//! in [`crate::tree`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::tree::{fit_tree_presorted, FlatTree, Presorted, ProbMode, Strategy, TreeModel, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub b: usize,
    /// Features drawn per split; `None` means `ceil(d / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            b: 100,
            mtry: None,
            bootstrap: true,
            tree: TreeParams { max_depth: usize::MAX, min_leaf: 5, min_split: 10, ..TreeParams::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { rounds: 200, learning_rate: 0.1, tree: TreeParams { max_depth: 6, ..TreeParams::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub b: usize,
    pub mtry: usize,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub init_value: f64,
    pub stages: Vec<(TreeModel, f64)>,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnsembleModel {
    Forest(ForestModel),
    Boost(BoostModel),
}

pub fn fit_forest(x: &IncompleteMatrix, y: &[f64], strategy: Strategy, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let d = x.d();
    let n = x.n();
    if params.b == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let mtry = params.mtry.unwrap_or(d.div_ceil(3).max(1));
    if mtry == 0 || mtry > d {
        return Err(Error::InvalidParameter(format!("mtry = {mtry} outside 1..={d}")));
    }
    let tree_params = TreeParams { mtry: Some(mtry), ..params.tree.clone() };
    let presorted = Presorted::new(x);
    let trees = (0..params.b)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed::derive(seed, &[t as u64]);
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = seed::rng(seed::derive(tree_seed, &[0]));
                (0..n).map(|_| rng.random_range(0..n.max(1))).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_presorted(x, y, &rows, &presorted, strategy, &tree_params, seed::derive(tree_seed, &[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees, b: params.b, mtry, bootstrap: params.bootstrap })
}

/// Least-squares boosting. Stage predictions on the training rows use the
/// expected mode, so probabilistic nodes contribute their weighted average.
pub fn fit_boosting(x: &IncompleteMatrix, y: &[f64], strategy: Strategy, params: &BoostParams, seed: u64) -> Result<BoostModel> {
    if params.rounds == 0 {
        return Err(Error::InvalidParameter("boosting needs at least one round".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::InvalidParameter(format!("learning rate {} outside (0, 1]", params.learning_rate)));
    }
    if y.len() != x.n() || y.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} targets for {} rows", y.len(), x.n())));
    }
    let init_value = y.iter().sum::<f64>() / y.len() as f64;
    let mut fitted = vec![init_value; y.len()];
    let mut residual = vec![0.0; y.len()];
    let rows: Vec<usize> = (0..x.n()).collect();
    let presorted = Presorted::new(x);
    let mut stages = Vec::with_capacity(params.rounds);
    for m in 0..params.rounds {
        for ((r, yi), fi) in residual.iter_mut().zip(y).zip(&fitted) {
            *r = yi - fi;
        }
        let tree = fit_tree_presorted(x, &residual, &rows, &presorted, strategy, &params.tree, seed::derive(seed, &[m as u64]))?;
        let step = tree.predict_matrix(x, 0, ProbMode::Expected)?;
        for (f, s) in fitted.iter_mut().zip(step) {
            *f += params.learning_rate * s;
        }
        stages.push((tree, params.learning_rate));
    }
    Ok(BoostModel { init_value, stages, rounds: params.rounds })
}

impl EnsembleModel {
    pub fn d(&self) -> usize {
        match self {
            EnsembleModel::Forest(f) => f.trees[0].d,
            EnsembleModel::Boost(b) => b.stages.first().map_or(0, |s| s.0.d),
        }
    }

    fn trees(&self) -> Vec<&TreeModel> {
        match self {
            EnsembleModel::Forest(f) => f.trees.iter().collect(),
            EnsembleModel::Boost(b) => b.stages.iter().map(|s| &s.0).collect(),
        }
    }

    /// Combines per-tree outputs given in tree order.
    fn combine(&self, outputs: impl Iterator<Item = f64>) -> f64 {
        match self {
            EnsembleModel::Forest(f) => outputs.sum::<f64>() / f.trees.len() as f64,
            EnsembleModel::Boost(b) => b.init_value + outputs.zip(&b.stages).map(|(o, (_, lr))| lr * o).sum::<f64>(),
        }
    }

    /// Prediction from values and mask. Tree t receives the stream derived
    /// from `(seed, t)`; tree outputs are summed in index order.
    pub fn predict_parts(&self, values: &[f64], mask: &[bool], seed: u64, mode: ProbMode) -> f64 {
        let trees = self.trees();
        self.combine(trees.iter().enumerate().map(|(t, tree)| tree.predict_parts(values, mask, seed::derive(seed, &[t as u64]), mode)))
    }

    /// Row i uses the stream derived from `(seed, i)`, as in `predict_parts`.
    /// Rows are processed in blocks, tree by tree, to keep each tree in cache.
    pub fn predict_matrix(&self, x: &IncompleteMatrix, seed: u64, mode: ProbMode) -> Result<Vec<f64>> {
        const BLOCK: usize = 512;
        if let EnsembleModel::Boost(b) = self {
            if b.stages.is_empty() {
                return Ok(vec![b.init_value; x.n()]);
            }
        }
        if x.d() != self.d() {
            return Err(Error::DimensionMismatch(format!("model has d = {}, data has d = {}", self.d(), x.d())));
        }
        let trees = self.trees();
        let flat: Vec<FlatTree> = trees.iter().map(|t| FlatTree::new(t)).collect();
        let blocks: Vec<Vec<f64>> = (0..x.n().div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let rows = b * BLOCK..((b + 1) * BLOCK).min(x.n());
                let seeds: Vec<u64> = rows.clone().map(|i| seed::derive(seed, &[i as u64])).collect();
                let out: Vec<Vec<f64>> = trees
                    .iter()
                    .zip(&flat)
                    .enumerate()
                    .map(|(t, (tree, flat))| {
                        rows.clone()
                            .zip(&seeds)
                            .map(|(i, &s)| {
                                let (v, m, s) = (x.row_values(i), x.row_mask(i), seed::derive(s, &[t as u64]));
                                match mode {
                                    ProbMode::Stochastic => flat.predict(v, m, s),
                                    ProbMode::Expected => tree.predict_parts(v, m, s, mode),
                                }
                            })
                            .collect()
                    })
                    .collect();
                (0..rows.len()).map(|r| self.combine(out.iter().map(|o| o[r]))).collect()
            })
            .collect();
        Ok(blocks.concat())
    }
}

/// Stochastic prediction for one possibly incomplete row.
pub fn predict_ensemble(model: &EnsembleModel, row: &[Option<f64>], seed: u64) -> Result<f64> {
    if row.len() != model.d() {
        return Err(Error::DimensionMismatch(format!("row of length {} for d = {}", row.len(), model.d())));
    }
    let values: Vec<f64> = row.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mask: Vec<bool> = row.iter().map(Option::is_none).collect();
    Ok(model.predict_parts(&values, &mask, seed, ProbMode::Stochastic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fit_tree;

    fn design(n: usize, seed_: u64) -> (IncompleteMatrix, Vec<f64>) {
        let mut rng = seed::rng(seed_);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let c: f64 = rng.random();
            y.push((5.0 * a).sin() + b * b);
            let miss = rng.random::<f64>() < 0.2;
            rows.push(vec![if miss { None } else { Some(a) }, Some(b), Some(c)]);
        }
        (IncompleteMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_is_a_tree() {
        let (x, y) = design(300, 1);
        let tp = TreeParams::default();
        let fp = ForestParams { b: 1, mtry: Some(3), bootstrap: false, tree: tp.clone() };
        for s in [Strategy::Mia, Strategy::ObservedBlock, Strategy::ObservedSurrogate] {
            let f = fit_forest(&x, &y, s, &fp, 9).unwrap();
            let t = fit_tree(&x, &y, s, &TreeParams { mtry: Some(3), ..tp.clone() }, 0).unwrap();
            let a = EnsembleModel::Forest(f).predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
            let b = t.predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn constant_response() {
        let (x, _) = design(100, 2);
        let y = vec![2.5; 100];
        let f = fit_forest(&x, &y, Strategy::Mia, &ForestParams { b: 5, ..Default::default() }, 0).unwrap();
        let p = EnsembleModel::Forest(f).predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        assert!(p.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn forest_order_invariance() {
        let (x, y) = design(200, 3);
        let f = fit_forest(&x, &y, Strategy::Mia, &ForestParams { b: 10, ..Default::default() }, 4).unwrap();
        let mut rev = f.clone();
        rev.trees.reverse();
        let a = EnsembleModel::Forest(f).predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        let b = EnsembleModel::Forest(rev).predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn forest_of_identical_trees() {
        let (x, y) = design(200, 5);
        let t = fit_tree(&x, &y, Strategy::Mia, &TreeParams::default(), 0).unwrap();
        let f = ForestModel { trees: vec![t.clone(); 4], b: 4, mtry: 3, bootstrap: false };
        let a = EnsembleModel::Forest(f).predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        let b = t.predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn forest_is_deterministic() {
        let (x, y) = design(200, 6);
        let p = ForestParams { b: 8, ..Default::default() };
        for s in Strategy::ALL {
            assert_eq!(fit_forest(&x, &y, s, &p, 1).unwrap(), fit_forest(&x, &y, s, &p, 1).unwrap());
        }
    }

    #[test]
    fn one_round_boost_is_init_plus_tree() {
        let (x, y) = design(300, 7);
        let p = BoostParams { rounds: 1, learning_rate: 1.0, tree: TreeParams::default() };
        let b = fit_boosting(&x, &y, Strategy::Mia, &p, 3).unwrap();
        let init = y.iter().sum::<f64>() / 300.0;
        let resid: Vec<f64> = y.iter().map(|v| v - init).collect();
        let t = fit_tree(&x, &resid, Strategy::Mia, &TreeParams::default(), seed::derive(3, &[0])).unwrap();
        let pb = EnsembleModel::Boost(b).predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        let pt = t.predict_matrix(&x, 0, ProbMode::Stochastic).unwrap();
        assert!(pb.iter().zip(&pt).all(|(a, b)| (a - (init + b)).abs() < 1e-12));
    }

    #[test]
    fn bulk_prediction_matches_row_prediction() {
        let (x, y) = design(300, 10);
        let (t, _) = design(1100, 11);
        let fp = ForestParams { b: 4, ..Default::default() };
        let bp = BoostParams { rounds: 3, ..Default::default() };
        for s in [Strategy::ObservedProbabilistic, Strategy::ObservedSurrogate] {
            for m in [
                EnsembleModel::Forest(fit_forest(&x, &y, s, &fp, 1).unwrap()),
                EnsembleModel::Boost(fit_boosting(&x, &y, s, &bp, 1).unwrap()),
            ] {
                for mode in [ProbMode::Stochastic, ProbMode::Expected] {
                    let bulk = m.predict_matrix(&t, 5, mode).unwrap();
                    for (i, b) in bulk.iter().enumerate() {
                        let one = m.predict_parts(t.row_values(i), t.row_mask(i), seed::derive(5, &[i as u64]), mode);
                        assert_eq!(b.to_bits(), one.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn zero_stages_give_init() {
        let (x, _) = design(10, 8);
        let m = EnsembleModel::Boost(BoostModel { init_value: 1.5, stages: vec![], rounds: 0 });
        assert_eq!(m.predict_matrix(&x, 0, ProbMode::Stochastic).unwrap(), vec![1.5; 10]);
    }

    #[test]
    fn boosting_training_error_non_increasing() {
        let (x, y) = design(400, 9);
        for s in [Strategy::Mia, Strategy::ObservedBlock, Strategy::ObservedSurrogate] {
            let mut prev = f64::INFINITY;
            let b = fit_boosting(&x, &y, s, &BoostParams { rounds: 30, ..Default::default() }, 2).unwrap();
            let mut fitted = vec![b.init_value; y.len()];
            for (tree, lr) in &b.stages {
                let step = tree.predict_matrix(&x, 0, ProbMode::Expected).unwrap();
                for (f, v) in fitted.iter_mut().zip(step) {
                    *f += lr * v;
                }
                let mse = fitted.iter().zip(&y).map(|(f, v)| (f - v).powi(2)).sum::<f64>() / y.len() as f64;
                assert!(mse <= prev + 1e-12, "{s:?}");
                prev = mse;
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let (x, y) = design(50, 10);
        assert!(fit_forest(&x, &y, Strategy::Mia, &ForestParams { b: 0, ..Default::default() }, 0).is_err());
        assert!(fit_forest(&x, &y, Strategy::Mia, &ForestParams { mtry: Some(4), ..Default::default() }, 0).is_err());
        assert!(fit_boosting(&x, &y, Strategy::Mia, &BoostParams { rounds: 0, ..Default::default() }, 0).is_err());
        assert!(fit_boosting(&x, &y, Strategy::Mia, &BoostParams { learning_rate: 0.0, ..Default::default() }, 0).is_err());
        let m = EnsembleModel::Forest(fit_forest(&x, &y, Strategy::Mia, &ForestParams { b: 2, ..Default::default() }, 0).unwrap());
        assert!(predict_ensemble(&m, &[Some(1.0)], 0).is_err());
    }
}
