//! Recursive partitioning with presorted feature lists.
//!
//! Every feature keeps one array of sample positions sorted by value
//! (observed samples only). A node owns a contiguous segment of each array
//! and of the position array; splitting partitions those segments stably in
//! place, so nothing is sorted below the root and nodes allocate nothing.
//! Nodes are grown from an explicit stack, which keeps very deep trees off
//! the call stack.

use rand::Rng;

use super::split::{scan_mia, scan_observed, Columns, Entry, Moments, NodeView, SplitCandidate};
use super::{surrogate, MissingRoute, ObservedCriterion, Side, SplitKind, Strategy, TreeModel, TreeNode, TreeParams};
use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;

/// Observed row ids of every feature sorted by value, ties by row id.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &IncompleteMatrix) -> Self {
        let order = (0..x.d())
            .map(|j| {
                let mut v: Vec<(f64, u32)> = (0..x.n()).filter(|&i| !x.is_missing(i, j)).map(|i| (x.row_values(i)[j], i as u32)).collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                v.into_iter().map(|(_, i)| i).collect()
            })
            .collect();
        Self { order }
    }

    /// Per-feature sample positions for a draw of rows (repeats allowed),
    /// sorted by value, then row id, then position.
    fn expand(&self, x: &IncompleteMatrix, rows: &[usize], y_pos: &[f64]) -> Vec<Vec<Entry>> {
        let n = x.n();
        let mut start = vec![0u32; n + 1];
        for &r in rows {
            start[r + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut by_row = vec![0u32; rows.len()];
        for (p, &r) in rows.iter().enumerate() {
            by_row[fill[r] as usize] = p as u32;
            fill[r] += 1;
        }
        self.order
            .iter()
            .enumerate()
            .map(|(j, ord)| {
                let mut out = Vec::with_capacity(rows.len());
                for &r in ord {
                    let val = x.row_values(r as usize)[j];
                    for &p in &by_row[start[r as usize] as usize..start[r as usize + 1] as usize] {
                        out.push(Entry { val, y: y_pos[p as usize], pos: p });
                    }
                }
                out
            })
            .collect()
    }
}

fn check_inputs(x: &IncompleteMatrix, y: &[f64], rows: &[usize]) -> Result<()> {
    if x.n() == 0 || x.d() == 0 || rows.is_empty() {
        return Err(Error::Empty("tree fit needs at least one row and one feature".into()));
    }
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch(format!("{} targets for {} rows", y.len(), x.n())));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= x.n()) {
        return Err(Error::DimensionMismatch(format!("row {r} out of range")));
    }
    if rows.iter().any(|&r| !y[r].is_finite()) {
        return Err(Error::InvalidParameter("response must be finite".into()));
    }
    Ok(())
}

fn best_over<F>(features: impl IntoIterator<Item = usize>, mut scan: F) -> Option<SplitCandidate>
where
    F: FnMut(usize) -> Option<SplitCandidate>,
{
    let mut best: Option<SplitCandidate> = None;
    for j in features {
        if let Some(c) = scan(j) {
            if best.as_ref().is_none_or(|b| c.criterion < b.criterion) {
                best = Some(c);
            }
        }
    }
    best
}

pub(crate) fn with_view<T>(
    x: &IncompleteMatrix,
    y: &[f64],
    rows: &[usize],
    f: impl FnOnce(&NodeView<'_>, &[Vec<Entry>]) -> T,
) -> Result<T> {
    check_inputs(x, y, rows)?;
    let cols = Columns::gather(x, rows);
    let y_pos: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let positions: Vec<u32> = (0..rows.len() as u32).collect();
    let shift = y_pos.iter().sum::<f64>() / y_pos.len() as f64;
    let view = NodeView { cols: &cols, y: &y_pos, shift, positions: &positions };
    let sorted = Presorted::new(x).expand(x, rows, &y_pos);
    Ok(f(&view, &sorted))
}

/// Best observed-value split over all features for the given rows. The
/// returned split carries `MissingRoute::Left` as a placeholder route.
pub fn best_split_observed(
    x: &IncompleteMatrix,
    y: &[f64],
    rows: &[usize],
    min_leaf: usize,
    criterion: ObservedCriterion,
) -> Result<Option<SplitCandidate>> {
    with_view(x, y, rows, |view, sorted| best_over(0..x.d(), |j| scan_observed(view, j, &sorted[j], min_leaf, criterion, rows.len())))
}

/// Best MIA split over all features for the given rows.
pub fn best_split_mia(x: &IncompleteMatrix, y: &[f64], rows: &[usize], min_leaf: usize) -> Result<Option<SplitCandidate>> {
    with_view(x, y, rows, |view, sorted| best_over(0..x.d(), |j| scan_mia(view, j, &sorted[j], min_leaf)))
}

/// Fits a tree on all rows of `x`.
pub fn fit_tree(x: &IncompleteMatrix, y: &[f64], strategy: Strategy, params: &TreeParams, seed: u64) -> Result<TreeModel> {
    let rows: Vec<usize> = (0..x.n()).collect();
    fit_tree_rows(x, y, &rows, strategy, params, seed)
}

/// Fits a tree on a sample of rows; repeated row ids (bootstrap draws) are
/// treated as distinct samples.
pub fn fit_tree_rows(
    x: &IncompleteMatrix,
    y: &[f64],
    rows: &[usize],
    strategy: Strategy,
    params: &TreeParams,
    seed: u64,
) -> Result<TreeModel> {
    check_inputs(x, y, rows)?;
    fit_tree_presorted(x, y, rows, &Presorted::new(x), strategy, params, seed)
}

struct Work {
    node: usize,
    pos: (usize, usize),
    ranges: Vec<(usize, usize)>,
    depth: usize,
    seed: u64,
}

/// Stable in-place partition of `seg` by `goes_left`; returns the left count.
fn partition<T: Copy>(seg: &mut [T], goes_left: &[bool], scratch: &mut Vec<T>, key: impl Fn(&T) -> u32) -> usize {
    scratch.clear();
    let mut k = 0;
    for i in 0..seg.len() {
        let p = seg[i];
        if goes_left[key(&p) as usize] {
            seg[k] = p;
            k += 1;
        } else {
            scratch.push(p);
        }
    }
    seg[k..].copy_from_slice(scratch);
    k
}

pub(crate) fn fit_tree_presorted(
    x: &IncompleteMatrix,
    y: &[f64],
    rows: &[usize],
    presorted: &Presorted,
    strategy: Strategy,
    params: &TreeParams,
    seed: u64,
) -> Result<TreeModel> {
    check_inputs(x, y, rows)?;
    let d = x.d();
    params.validate(d)?;
    let m = rows.len();
    let cols = Columns::gather(x, rows);
    let y_pos: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let mut positions: Vec<u32> = (0..m as u32).collect();
    let mut order = presorted.expand(x, rows, &y_pos);

    let leaf = |n_node: usize, value: f64| TreeNode {
        split: None,
        surrogates: Vec::new(),
        majority_side: Side::Left,
        left: None,
        right: None,
        leaf_value: value,
        n_node,
    };
    let mut nodes = vec![leaf(0, 0.0)];
    let mut goes_left = vec![false; m];
    let mut scratch = Vec::with_capacity(m);
    let mut entry_scratch = Vec::with_capacity(m);
    let ranges = order.iter().map(|o| (0, o.len())).collect();
    let mut root_sse = 0.0;
    let mut stack = vec![Work { node: 0, pos: (0, m), ranges, depth: 0, seed }];

    while let Some(w) = stack.pop() {
        let node_pos = &positions[w.pos.0..w.pos.1];
        let n = node_pos.len();
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &p in node_pos {
            let v = y_pos[p as usize];
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        let mean = sum / n as f64;
        nodes[w.node] = leaf(n, mean);
        let node_sse = if params.cp > 0.0 { Moments::from_values(node_pos.iter().map(|&p| y_pos[p as usize] - mean)).sse() } else { 0.0 };
        if w.node == 0 {
            root_sse = node_sse;
        }
        if w.depth >= params.max_depth || n < params.min_split || lo == hi {
            continue;
        }

        let mut rng = seed::rng(w.seed);
        let features: Vec<usize> = match params.mtry {
            Some(k) if k < d => {
                let mut f = rand::seq::index::sample(&mut rng, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let view = NodeView { cols: &cols, y: &y_pos, shift: mean, positions: node_pos };
        let seg = |j: usize| &order[j][w.ranges[j].0..w.ranges[j].1];
        let found = match strategy {
            Strategy::Mia => best_over(features, |j| scan_mia(&view, j, seg(j), params.min_leaf)),
            _ => best_over(features, |j| scan_observed(&view, j, seg(j), params.min_leaf, params.criterion, n)),
        };
        let Some(cand) = found else { continue };

        let mut split = cand.split;
        let j = split.feature;
        let (mut surrogates, mut majority) = (Vec::new(), Side::Left);
        if cand.left_observed.count < cand.right_observed.count {
            majority = Side::Right;
        }
        if split.kind == SplitKind::MissingVsNonMissing && cand.left_observed.count < cand.missing.count {
            majority = Side::Right;
        }
        match strategy {
            Strategy::Mia => {}
            Strategy::ObservedBlock => {
                split.missing_route = super::route_missing_block(&cand.left_observed, &cand.right_observed, &cand.missing).into();
            }
            Strategy::ObservedProbabilistic => {
                let (l, r) = (cand.left_observed.count, cand.right_observed.count);
                split.missing_route = MissingRoute::Probabilistic(l as f64 / (l + r) as f64);
            }
            Strategy::ObservedSurrogate => {
                let segs: Vec<&[Entry]> = (0..d).map(seg).collect();
                let (rules, maj) = surrogate::fit_sorted(&view, &segs, &split, params.min_leaf);
                surrogates = rules;
                majority = maj;
                split.missing_route = MissingRoute::SurrogateChain;
            }
        }

        let mut n_left = 0;
        for &p in node_pos {
            let side = if !view.is_missing(p, j) {
                split.observed_side(view.value(p, j))
            } else {
                match split.missing_route {
                    MissingRoute::Left => Side::Left,
                    MissingRoute::Right | MissingRoute::Separate => Side::Right,
                    MissingRoute::Probabilistic(pl) => {
                        if rng.random::<f64>() < pl {
                            Side::Left
                        } else {
                            Side::Right
                        }
                    }
                    MissingRoute::SurrogateChain => {
                        let row = rows[p as usize];
                        surrogate::route_with(&surrogates, majority, x.row_values(row), x.row_mask(row))
                    }
                }
            };
            goes_left[p as usize] = side == Side::Left;
            n_left += (side == Side::Left) as usize;
        }
        if n_left == 0 || n_left == n {
            continue;
        }
        if params.cp > 0.0 {
            let (mut l, mut r) = (Moments::default(), Moments::default());
            for &p in node_pos {
                let v = y_pos[p as usize] - mean;
                if goes_left[p as usize] {
                    l.push(v)
                } else {
                    r.push(v)
                }
            }
            if node_sse - l.sse() - r.sse() < params.cp * root_sse {
                continue;
            }
        }

        let depth = w.depth + 1;
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf(0, 0.0));
        nodes.push(leaf(0, 0.0));
        let node = &mut nodes[w.node];
        node.split = Some(split);
        node.surrogates = surrogates;
        node.majority_side = majority;
        node.left = Some(li);
        node.right = Some(ri);

        let k = partition(&mut positions[w.pos.0..w.pos.1], &goes_left, &mut scratch, |&p| p);
        debug_assert_eq!(k, n_left);
        let mid = w.pos.0 + k;
        // children too small to split never look at the sorted segments
        let grows = |size: usize| depth < params.max_depth && size >= params.min_split;
        let (grow_l, grow_r) = (grows(k), grows(n - k));
        let mut lr = Vec::new();
        let mut rr = Vec::new();
        if grow_l || grow_r {
            lr.reserve(d);
            rr.reserve(d);
            for (f, &(a, b)) in w.ranges.iter().enumerate() {
                let kl = partition(&mut order[f][a..b], &goes_left, &mut entry_scratch, |e| e.pos);
                lr.push((a, a + kl));
                rr.push((a + kl, b));
            }
        }
        stack.push(Work { node: ri, pos: (mid, w.pos.1), ranges: rr, depth, seed: seed::derive(w.seed, &[2]) });
        stack.push(Work { node: li, pos: (w.pos.0, mid), ranges: lr, depth, seed: seed::derive(w.seed, &[1]) });
    }
    Ok(TreeModel { nodes, strategy, params: params.clone(), d })
}
