//! Surrogate splits: stumps on other features trained to reproduce the
//! side chosen by the primary split.

use super::split::{Entry, NodeView};
use super::{Side, SplitSpec, SurrogateRule};
use crate::data::IncompleteMatrix;

/// Surrogate list (ascending misclassification) and majority side for a
/// thresholded primary split on the given rows.
///
/// Each candidate stump is trained on the rows observing both its feature
/// and the primary feature, and is kept only while it strictly beats the
/// blind rule (everything to the majority side) on those same rows.
pub fn fit_surrogates(x: &IncompleteMatrix, rows: &[usize], primary: &SplitSpec, min_leaf: usize) -> (Vec<SurrogateRule>, Side) {
    let y = vec![0.0; x.n()];
    super::build::with_view(x, &y, rows, |view, sorted| fit_sorted(view, sorted, primary, min_leaf))
        .unwrap_or_else(|_| (Vec::new(), Side::Left))
}

pub(crate) fn fit_sorted<S: AsRef<[Entry]>>(
    view: &NodeView<'_>,
    sorted: &[S],
    primary: &SplitSpec,
    min_leaf: usize,
) -> (Vec<SurrogateRule>, Side) {
    let j0 = primary.feature;
    let z0 = primary.threshold.expect("surrogates need a thresholded split");
    let n_left = sorted[j0].as_ref().iter().filter(|e| e.val <= z0).count();
    let majority = if 2 * n_left >= sorted[j0].as_ref().len() { Side::Left } else { Side::Right };

    let mut found: Vec<(u64, SurrogateRule)> = Vec::new();
    for (j, list) in sorted.iter().enumerate() {
        if j == j0 {
            continue;
        }
        let pairs: Vec<(f64, bool)> =
            list.as_ref().iter().filter(|e| !view.is_missing(e.pos, j0)).map(|e| (e.val, view.value(e.pos, j0) <= z0)).collect();
        if let Some((errors, rule)) = best_stump(&pairs, j, majority, min_leaf.max(1)) {
            found.push((errors, rule));
        }
    }
    found.sort_by(|a, b| a.1.misclassification.total_cmp(&b.1.misclassification).then(a.1.feature.cmp(&b.1.feature)));
    (found.into_iter().map(|(_, r)| r).collect(), majority)
}

/// Best one-split classifier of the side labels; `None` unless it strictly
/// beats sending every row to `majority`.
fn best_stump(pairs: &[(f64, bool)], feature: usize, majority: Side, min_leaf: usize) -> Option<(u64, SurrogateRule)> {
    let n = pairs.len() as u64;
    if n == 0 {
        return None;
    }
    let a = pairs.iter().filter(|p| p.1).count() as u64;
    let blind = match majority {
        Side::Left => n - a,
        Side::Right => a,
    };
    let mut best: Option<(u64, usize, bool)> = None;
    let mut a_k = 0u64;
    for k in 1..pairs.len() {
        a_k += pairs[k - 1].1 as u64;
        if k < min_leaf || pairs.len() - k < min_leaf || pairs[k - 1].0 >= pairs[k].0 {
            continue;
        }
        let l = k as u64;
        let straight = (l - a_k) + (a - a_k);
        let flipped = a_k + (n - l) - (a - a_k);
        for (err, flip) in [(straight, false), (flipped, true)] {
            if best.is_none_or(|(b, ..)| err < b) {
                best = Some((err, k, flip));
            }
        }
    }
    let (err, k, flip) = best?;
    (err < blind).then(|| {
        let rule = SurrogateRule {
            feature,
            threshold: 0.5 * (pairs[k - 1].0 + pairs[k].0),
            direction_flip: flip,
            misclassification: err as f64 / n as f64,
        };
        (err, rule)
    })
}

/// First surrogate whose feature is observed decides; otherwise the
/// majority side.
pub(crate) fn route_with(rules: &[SurrogateRule], majority: Side, values: &[f64], mask: &[bool]) -> Side {
    rules.iter().find(|r| !mask[r.feature]).map_or(majority, |r| r.side(values[r.feature]))
}
