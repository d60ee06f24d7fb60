//! Least-squares regression trees over incomplete matrices.
//!
//! Four strategies are available. Three of them choose splits on the
//! observed values of each feature and differ in how rows missing the split
//! feature are sent down: surrogate splits, a Bernoulli draw weighted by the
//! observed child sizes, or a single block sent to the cheaper side. The
//! fourth (MIA) scores the placement of missing rows inside the criterion
//! and may also split observed against missing.
//!
//! Nodes live in an arena; index 0 is the root.

mod build;
mod dump;
mod split;
mod surrogate;

use serde::{Deserialize, Serialize};

use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;

pub use build::{best_split_mia, best_split_observed, fit_tree, fit_tree_rows};
pub(crate) use build::{fit_tree_presorted, Presorted};
pub use dump::dump;
pub use split::{route_missing_block, Moments, SplitCandidate};
pub use surrogate::fit_surrogates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MissingRoute {
    Left,
    Right,
    /// Observed rows go left, missing rows go right.
    Separate,
    /// Stores the left probability `#L / (#L + #R)` seen at fit time.
    Probabilistic(f64),
    SurrogateChain,
}

impl From<Side> for MissingRoute {
    fn from(s: Side) -> Self {
        match s {
            Side::Left => MissingRoute::Left,
            Side::Right => MissingRoute::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    Thresholded,
    MissingVsNonMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub feature: usize,
    pub threshold: Option<f64>,
    pub missing_route: MissingRoute,
    pub kind: SplitKind,
}

impl SplitSpec {
    /// Side for an observed value of the split feature.
    #[inline]
    pub fn observed_side(&self, v: f64) -> Side {
        match self.threshold {
            Some(z) if v > z => Side::Right,
            _ => Side::Left,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.kind {
            SplitKind::Thresholded => {
                self.threshold.is_some_and(f64::is_finite)
                    && match self.missing_route {
                        MissingRoute::Probabilistic(p) => (0.0..=1.0).contains(&p),
                        MissingRoute::Separate => false,
                        _ => true,
                    }
            }
            SplitKind::MissingVsNonMissing => self.threshold.is_none() && self.missing_route == MissingRoute::Separate,
        }
    }
}

/// One-split classifier that mimics the primary split on another feature.
/// Without a flip, `x <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRule {
    pub feature: usize,
    pub threshold: f64,
    pub direction_flip: bool,
    pub misclassification: f64,
}

impl SurrogateRule {
    #[inline]
    pub fn side(&self, v: f64) -> Side {
        if (v <= self.threshold) != self.direction_flip {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub split: Option<SplitSpec>,
    pub surrogates: Vec<SurrogateRule>,
    pub majority_side: Side,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub leaf_value: f64,
    pub n_node: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    ObservedSurrogate,
    ObservedProbabilistic,
    ObservedBlock,
    Mia,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::ObservedSurrogate, Strategy::ObservedProbabilistic, Strategy::ObservedBlock, Strategy::Mia];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "surrogate" => Ok(Strategy::ObservedSurrogate),
            "prob" | "probabilistic" => Ok(Strategy::ObservedProbabilistic),
            "block" => Ok(Strategy::ObservedBlock),
            "mia" => Ok(Strategy::Mia),
            _ => Err(Error::InvalidParameter(format!("unknown strategy `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ObservedSurrogate => "surrogate",
            Strategy::ObservedProbabilistic => "prob",
            Strategy::ObservedBlock => "block",
            Strategy::Mia => "mia",
        }
    }
}

/// Split criterion used by the observed-value strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservedCriterion {
    /// Within-child squared error averaged over the rows observing the feature.
    MeanWithin,
    /// Decrease of squared error on the observing rows, divided by the node
    /// size (the usual rpart scaling).
    Reduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_split: usize,
    /// Features drawn per node; `None` uses all of them.
    pub mtry: Option<usize>,
    pub criterion: ObservedCriterion,
    /// Complexity threshold: a split is kept only if it lowers the squared
    /// error of the node's rows by at least `cp` times the root's. Zero
    /// disables the check; rpart uses 0.01.
    #[serde(default)]
    pub cp: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 30, min_leaf: 5, min_split: 10, mtry: None, criterion: ObservedCriterion::MeanWithin, cp: 0.0 }
    }
}

impl TreeParams {
    pub fn stump() -> Self {
        Self { max_depth: 1, ..Self::default() }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter("min_leaf must be at least 1".into()));
        }
        if !(self.cp >= 0.0 && self.cp.is_finite()) {
            return Err(Error::InvalidParameter(format!("cp = {} must be a nonnegative number", self.cp)));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > d {
                return Err(Error::InvalidParameter(format!("mtry = {m} outside 1..={d}")));
            }
        }
        Ok(())
    }
}

/// How probabilistic nodes treat a missing value at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ProbMode {
    /// Bernoulli draw with the stored left probability.
    #[default]
    Stochastic,
    /// Weighted average of both subtrees.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub strategy: Strategy,
    pub params: TreeParams,
    pub d: usize,
}

impl TreeModel {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, dep)) = stack.pop() {
            best = best.max(dep);
            let n = &self.nodes[i];
            for c in [n.left, n.right].into_iter().flatten() {
                stack.push((c, dep + 1));
            }
        }
        best
    }

    /// Side taken at an internal node. The generator is created from `seed`
    /// the first time a probabilistic node meets a missing value.
    fn next_side(&self, node: &TreeNode, values: &[f64], mask: &[bool], rng: &mut Option<rand_chacha::ChaCha8Rng>, seed: u64) -> Side {
        let s = node.split.as_ref().expect("internal node");
        if !mask[s.feature] {
            return s.observed_side(values[s.feature]);
        }
        match s.missing_route {
            MissingRoute::Left => Side::Left,
            MissingRoute::Right | MissingRoute::Separate => Side::Right,
            MissingRoute::SurrogateChain => surrogate::route_with(&node.surrogates, node.majority_side, values, mask),
            MissingRoute::Probabilistic(p) => {
                use rand::Rng;
                if rng.get_or_insert_with(|| seed::rng(seed)).random::<f64>() < p {
                    Side::Left
                } else {
                    Side::Right
                }
            }
        }
    }

    /// Prediction for a row given as values plus missingness mask.
    pub fn predict_parts(&self, values: &[f64], mask: &[bool], seed: u64, mode: ProbMode) -> f64 {
        match mode {
            ProbMode::Stochastic => {
                let mut rng = None;
                let mut i = 0;
                loop {
                    let node = &self.nodes[i];
                    if node.is_leaf() {
                        return node.leaf_value;
                    }
                    i = match self.next_side(node, values, mask, &mut rng, seed) {
                        Side::Left => node.left,
                        Side::Right => node.right,
                    }
                    .expect("internal node has children");
                }
            }
            ProbMode::Expected => self.expected_from(0, values, mask),
        }
    }

    fn expected_from(&self, start: usize, values: &[f64], mask: &[bool]) -> f64 {
        let mut i = start;
        let mut none = None;
        loop {
            let node = &self.nodes[i];
            let Some(s) = node.split.as_ref() else {
                return node.leaf_value;
            };
            let (l, r) = (node.left.expect("left child"), node.right.expect("right child"));
            if let (true, MissingRoute::Probabilistic(p)) = (mask[s.feature], s.missing_route) {
                return p * self.expected_from(l, values, mask) + (1.0 - p) * self.expected_from(r, values, mask);
            }
            i = match self.next_side(node, values, mask, &mut none, 0) {
                Side::Left => l,
                Side::Right => r,
            };
        }
    }

    /// Per-row predictions; row i of a stochastic run uses the stream
    /// derived from `(seed, i)`.
    pub fn predict_matrix(&self, x: &IncompleteMatrix, seed: u64, mode: ProbMode) -> Result<Vec<f64>> {
        if x.d() != self.d {
            return Err(Error::DimensionMismatch(format!("model has d = {}, data has d = {}", self.d, x.d())));
        }
        if mode == ProbMode::Stochastic {
            let flat = FlatTree::new(self);
            return Ok((0..x.n()).map(|i| flat.predict(x.row_values(i), x.row_mask(i), seed::derive(seed, &[i as u64]))).collect());
        }
        Ok((0..x.n()).map(|i| self.predict_parts(x.row_values(i), x.row_mask(i), seed::derive(seed, &[i as u64]), mode)).collect())
    }

    /// Index of the leaf reached by a row when no random routing is needed.
    pub fn leaf_index(&self, values: &[f64], mask: &[bool], seed: u64) -> usize {
        let mut rng = None;
        let mut i = 0;
        while !self.nodes[i].is_leaf() {
            let node = &self.nodes[i];
            i = match self.next_side(node, values, mask, &mut rng, seed) {
                Side::Left => node.left,
                Side::Right => node.right,
            }
            .expect("internal node has children");
        }
        i
    }
}

/// Compact copy of a tree's routing data used for bulk stochastic prediction.
pub(crate) struct FlatTree<'a> {
    model: &'a TreeModel,
    nodes: Vec<Flat>,
}

#[derive(Clone, Copy)]
struct Flat {
    threshold: f64,
    /// Leaf value, or the left probability of a probabilistic node.
    aux: f64,
    feature: u32,
    left: u32,
    right: u32,
    route: u8,
}

const LEAF: u8 = 0;
const TO_LEFT: u8 = 1;
const TO_RIGHT: u8 = 2;
const PROB: u8 = 3;
const SURROGATE: u8 = 4;

impl<'a> FlatTree<'a> {
    pub(crate) fn new(model: &'a TreeModel) -> Self {
        let nodes = model
            .nodes
            .iter()
            .map(|n| match &n.split {
                None => Flat { threshold: 0.0, aux: n.leaf_value, feature: 0, left: 0, right: 0, route: LEAF },
                Some(s) => {
                    let (route, aux) = match s.missing_route {
                        MissingRoute::Left => (TO_LEFT, 0.0),
                        MissingRoute::Right | MissingRoute::Separate => (TO_RIGHT, 0.0),
                        MissingRoute::Probabilistic(p) => (PROB, p),
                        MissingRoute::SurrogateChain => (SURROGATE, 0.0),
                    };
                    Flat {
                        threshold: s.threshold.unwrap_or(f64::INFINITY),
                        aux,
                        feature: s.feature as u32,
                        left: n.left.expect("internal node has children") as u32,
                        right: n.right.expect("internal node has children") as u32,
                        route,
                    }
                }
            })
            .collect();
        FlatTree { model, nodes }
    }

    /// Same result as `TreeModel::predict_parts` in stochastic mode.
    pub(crate) fn predict(&self, values: &[f64], mask: &[bool], seed: u64) -> f64 {
        use rand::Rng;
        let mut rng: Option<rand_chacha::ChaCha8Rng> = None;
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            let side_left = match n.route {
                LEAF => return n.aux,
                _ if !mask[n.feature as usize] => !(values[n.feature as usize] > n.threshold),
                TO_LEFT => true,
                TO_RIGHT => false,
                PROB => rng.get_or_insert_with(|| seed::rng(seed)).random::<f64>() < n.aux,
                _ => {
                    let node = &self.model.nodes[i];
                    surrogate::route_with(&node.surrogates, node.majority_side, values, mask) == Side::Left
                }
            };
            i = if side_left { n.left } else { n.right } as usize;
        }
    }
}

/// Stochastic prediction for one possibly incomplete row.
pub fn predict(model: &TreeModel, row: &[Option<f64>], seed: u64) -> Result<f64> {
    predict_with_mode(model, row, seed, ProbMode::Stochastic)
}

pub fn predict_with_mode(model: &TreeModel, row: &[Option<f64>], seed: u64, mode: ProbMode) -> Result<f64> {
    if row.len() != model.d {
        return Err(Error::DimensionMismatch(format!("row of length {} for d = {}", row.len(), model.d)));
    }
    let values: Vec<f64> = row.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mask: Vec<bool> = row.iter().map(Option::is_none).collect();
    Ok(model.predict_parts(&values, &mask, seed, mode))
}

/// Feature of the root split, `None` for a single leaf.
pub fn selected_root_feature(model: &TreeModel) -> Option<usize> {
    model.root().split.map(|s| s.feature)
}
