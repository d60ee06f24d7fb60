//! Split search on presorted feature lists.
//!
//! Every scan works on a node's rows, a per-feature list of the node's
//! observed rows sorted by value, and the training response. Candidate
//! thresholds are midpoints between consecutive distinct observed values.
//! Scans visit features in ascending order and thresholds in ascending
//! order, and only a strictly smaller criterion replaces the incumbent, so
//! ties resolve to the smaller feature, then the smaller threshold, then
//! missing-left before missing-right, then thresholded before separate.

use super::{MissingRoute, ObservedCriterion, Side, SplitKind, SplitSpec};

/// Count, sum and sum of squares of (centered) responses.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Moments::default();
        for v in values {
            m.push(v);
        }
        m
    }

    /// Sum of squared deviations from the mean.
    #[inline]
    pub fn sse(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sum_sq - self.sum * self.sum / self.count as f64).max(0.0)
        }
    }

    #[inline]
    pub fn plus(&self, o: &Moments) -> Moments {
        Moments { count: self.count + o.count, sum: self.sum + o.sum, sum_sq: self.sum_sq + o.sum_sq }
    }

    #[inline]
    pub fn minus(&self, o: &Moments) -> Moments {
        Moments { count: self.count - o.count, sum: self.sum - o.sum, sum_sq: self.sum_sq - o.sum_sq }
    }
}

/// Best split found by a scan, with its criterion value (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub split: SplitSpec,
    pub criterion: f64,
    /// Observed rows of the split feature on each side of the threshold.
    pub left_observed: Moments,
    pub right_observed: Moments,
    pub missing: Moments,
}

/// Per-sample copy of the feature matrix, one contiguous column per feature.
pub(crate) struct Columns {
    pub m: usize,
    pub vals: Vec<f64>,
    pub miss: Vec<bool>,
}

impl Columns {
    pub fn gather(x: &crate::data::IncompleteMatrix, rows: &[usize]) -> Self {
        let (m, d) = (rows.len(), x.d());
        let mut vals = vec![0.0; m * d];
        let mut miss = vec![false; m * d];
        for (p, &r) in rows.iter().enumerate() {
            let (v, k) = (x.row_values(r), x.row_mask(r));
            for j in 0..d {
                vals[j * m + p] = v[j];
                miss[j * m + p] = k[j];
            }
        }
        Self { m, vals, miss }
    }
}

/// Read-only view of a node used by the scans.
/// One observed sample in a sorted feature list.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub val: f64,
    pub y: f64,
    pub pos: u32,
}

pub(crate) struct NodeView<'a> {
    pub cols: &'a Columns,
    /// Response indexed by sample position.
    pub y: &'a [f64],
    /// Node mean subtracted from every response before accumulating.
    pub shift: f64,
    /// Sample positions in the node, ascending.
    pub positions: &'a [u32],
}

impl NodeView<'_> {
    #[inline]
    pub fn yv(&self, pos: u32) -> f64 {
        self.y[pos as usize] - self.shift
    }

    #[inline]
    pub fn value(&self, pos: u32, j: usize) -> f64 {
        self.cols.vals[j * self.cols.m + pos as usize]
    }

    #[inline]
    pub fn is_missing(&self, pos: u32, j: usize) -> bool {
        self.cols.miss[j * self.cols.m + pos as usize]
    }

    pub fn missing_moments(&self, j: usize) -> Moments {
        let mut m = Moments::default();
        let miss = &self.cols.miss[j * self.cols.m..(j + 1) * self.cols.m];
        for &p in self.positions {
            if miss[p as usize] {
                m.push(self.yv(p));
            }
        }
        m
    }
}

/// Between-child part of the squared error, `s_l^2/n_l + s_r^2/n_r`. For
/// a fixed set of rows, the within-child error is the total sum of squares
/// minus this, so scans maximize it and compute the criterion once.
#[inline]
fn between(n_l: f64, s_l: f64, n_r: f64, s_r: f64) -> f64 {
    s_l * s_l / n_l + s_r * s_r / n_r
}

/// Observed-only criterion for one feature. Returns the best thresholded
/// split of the observed rows that leaves at least `min_leaf` observed rows
/// on each side.
pub(crate) fn scan_observed(
    view: &NodeView<'_>,
    j: usize,
    sorted: &[Entry],
    min_leaf: usize,
    criterion: ObservedCriterion,
    n_node: usize,
) -> Option<SplitCandidate> {
    let shift = view.shift;
    let total = Moments::from_values(sorted.iter().map(|e| e.y - shift));
    let min_leaf = min_leaf.max(1);
    if total.count < 2 * min_leaf {
        return None;
    }
    let n = sorted.len();
    let nt = n as f64;
    let mut best: Option<(f64, usize)> = None;
    let mut s = 0.0;
    for k in 1..n {
        s += sorted[k - 1].y - shift;
        if k < min_leaf || n - k < min_leaf || sorted[k - 1].val >= sorted[k].val {
            continue;
        }
        let score = between(k as f64, s, nt - k as f64, total.sum - s);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, k));
        }
    }
    let (_, k) = best?;
    let left = Moments::from_values(sorted[..k].iter().map(|e| e.y - shift));
    let within = left.sse() + total.minus(&left).sse();
    let c = match criterion {
        ObservedCriterion::MeanWithin => within / total.count as f64,
        ObservedCriterion::Reduction => (within - total.sse()) / n_node as f64,
    };
    let z = 0.5 * (sorted[k - 1].val + sorted[k].val);
    Some(SplitCandidate {
        split: SplitSpec { feature: j, threshold: Some(z), missing_route: MissingRoute::Left, kind: SplitKind::Thresholded },
        criterion: c,
        left_observed: left,
        right_observed: total.minus(&left),
        missing: view.missing_moments(j),
    })
}

/// MIA criterion for one feature: every threshold with the missing rows on
/// either side, plus the observed-versus-missing split. Children (missing
/// rows included) must hold at least `min_leaf` rows.
pub(crate) fn scan_mia(view: &NodeView<'_>, j: usize, sorted: &[Entry], min_leaf: usize) -> Option<SplitCandidate> {
    let shift = view.shift;
    let n_node = view.positions.len();
    let observed = Moments::from_values(sorted.iter().map(|e| e.y - shift));
    let missing = view.missing_moments(j);
    let min_leaf = min_leaf.max(1);
    let (oc, os) = (observed.count, observed.sum);
    let (mc, ms) = (missing.count, missing.sum);
    let mut best: Option<(f64, Option<usize>, Side)> = None;
    let mut s = 0.0;
    for k in 1..sorted.len() {
        s += sorted[k - 1].y - shift;
        if sorted[k - 1].val >= sorted[k].val {
            continue;
        }
        let r = oc - k;
        if k + mc >= min_leaf && r >= min_leaf {
            let score = between((k + mc) as f64, s + ms, r as f64, os - s);
            if best.is_none_or(|(b, ..)| score > b) {
                best = Some((score, Some(k), Side::Left));
            }
        }
        // with no missing rows the right-routed candidate repeats the left one
        if mc > 0 && k >= min_leaf && r + mc >= min_leaf {
            let score = between(k as f64, s, (r + mc) as f64, os - s + ms);
            if best.is_none_or(|(b, ..)| score > b) {
                best = Some((score, Some(k), Side::Right));
            }
        }
    }
    if oc >= min_leaf && mc >= min_leaf {
        let score = between(oc as f64, os, mc as f64, ms);
        if best.is_none_or(|(b, ..)| score > b) {
            best = Some((score, None, Side::Left));
        }
    }
    let (_, k, side) = best?;
    let nf = n_node as f64;
    Some(match k {
        Some(k) => {
            let left = Moments::from_values(sorted[..k].iter().map(|e| e.y - shift));
            let right = observed.minus(&left);
            let c = match side {
                Side::Left => left.plus(&missing).sse() + right.sse(),
                Side::Right => left.sse() + right.plus(&missing).sse(),
            } / nf;
            let z = 0.5 * (sorted[k - 1].val + sorted[k].val);
            SplitCandidate {
                split: SplitSpec { feature: j, threshold: Some(z), missing_route: side.into(), kind: SplitKind::Thresholded },
                criterion: c,
                left_observed: left,
                right_observed: right,
                missing,
            }
        }
        None => SplitCandidate {
            split: SplitSpec { feature: j, threshold: None, missing_route: MissingRoute::Separate, kind: SplitKind::MissingVsNonMissing },
            criterion: (observed.sse() + missing.sse()) / nf,
            left_observed: observed,
            right_observed: Moments::default(),
            missing,
        },
    })
}

/// Side that receives the missing block: the one with the lower total
/// squared error once the block is merged into it. Ties go left.
pub fn route_missing_block(left: &Moments, right: &Moments, missing: &Moments) -> Side {
    if missing.count == 0 {
        return Side::Left;
    }
    let err_left = left.plus(missing).sse() + right.sse();
    let err_right = left.sse() + right.plus(missing).sse();
    if err_left <= err_right {
        Side::Left
    } else {
        Side::Right
    }
}
