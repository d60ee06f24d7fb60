//! Root-variable selection frequency of single-split trees when one or both
//! of two independent covariates have missing values.
//!
//! Design: `X1, X2 ~ N(0, 1)` independent, `Y = 0.25 X1 + ε`, `ε ~ N(0, 1)`,
//! MCAR missingness with probability `p`. Stumps use the observed-value
//! criterion with the rpart scaling ([`ObservedCriterion::Reduction`]).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::tree::{fit_tree, selected_root_feature, ObservedCriterion, Strategy, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingOn {
    X1Only,
    Both,
}

impl MissingOn {
    pub fn name(self) -> &'static str {
        match self {
            MissingOn::X1Only => "x1",
            MissingOn::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x1" => Ok(MissingOn::X1Only),
            "both" => Ok(MissingOn::Both),
            other => Err(Error::InvalidParameter(format!("unknown missing-on value {other:?} (x1|both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub p: f64,
    pub n: usize,
    pub missing_on: MissingOn,
    pub reps: usize,
    /// Repetitions whose root split uses X1.
    pub x1_count: usize,
    /// Repetitions where no split was possible.
    pub no_split: usize,
    pub frequency: f64,
}

/// Stump parameters of the experiment.
pub fn selection_stump() -> TreeParams {
    TreeParams { max_depth: 1, criterion: ObservedCriterion::Reduction, ..TreeParams::default() }
}

fn sample(n: usize, p: f64, missing_on: MissingOn, seed: u64) -> Result<(IncompleteMatrix, Vec<f64>)> {
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(2 * n);
    let mut mask = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let m1 = rng.random::<f64>() < p;
        let m2 = rng.random::<f64>() < p && missing_on == MissingOn::Both;
        values.extend([x1, x2]);
        mask.extend([m1, m2]);
        y.push(0.25 * x1 + e);
    }
    Ok((IncompleteMatrix::new(n, 2, values, mask)?, y))
}

/// Fraction of repetitions whose stump splits on X1, for every (p, n).
/// Repetition `r` at `(p, n)` uses the stream `derive(seed, [bits(p), n, r])`.
pub fn selection_frequency_experiment(
    p_grid: &[f64],
    n_grid: &[usize],
    missing_on: MissingOn,
    reps: usize,
    seed: u64,
) -> Result<Vec<SelectionRow>> {
    if p_grid.is_empty() || n_grid.is_empty() || reps == 0 {
        return Err(Error::InvalidParameter("grids and reps must be nonempty".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1]")));
    }
    let params = selection_stump();
    let mut out = Vec::with_capacity(p_grid.len() * n_grid.len());
    for &p in p_grid {
        for &n in n_grid {
            let (mut x1_count, mut no_split) = (0, 0);
            for r in 0..reps {
                let (x, y) = sample(n, p, missing_on, seed::derive(seed, &[p.to_bits(), n as u64, r as u64]))?;
                let tree = fit_tree(&x, &y, Strategy::ObservedProbabilistic, &params, 0)?;
                match selected_root_feature(&tree) {
                    Some(0) => x1_count += 1,
                    Some(_) => {}
                    None => no_split += 1,
                }
            }
            out.push(SelectionRow { p, n, missing_on, reps, x1_count, no_split, frequency: x1_count as f64 / reps as f64 });
        }
    }
    Ok(out)
}
