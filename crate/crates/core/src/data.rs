//! Incomplete feature matrices.
//!
//! An [`IncompleteMatrix`] pairs a dense row-major value buffer with a
//! boolean mask (`true` = missing). The mask is the only source of truth:
//! masked cells always hold [`PLACEHOLDER`] and are never read as numbers.

use crate::error::{Error, Result};

/// Value stored under masked cells.
pub const PLACEHOLDER: f64 = 0.0;

/// n×d real matrix with a missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteMatrix {
    values: Vec<f64>,
    mask: Vec<bool>,
    n: usize,
    d: usize,
}

impl IncompleteMatrix {
    /// Build from row-major buffers. Masked cells are canonicalized to the
    /// placeholder; unmasked cells must be finite.
    pub fn new(n: usize, d: usize, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != n * d || mask.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells for {n}x{d}, got {} values and {} mask entries",
                n * d,
                values.len(),
                mask.len()
            )));
        }
        for (k, (v, &m)) in values.iter_mut().zip(&mask).enumerate() {
            if m {
                *v = PLACEHOLDER;
            } else if !v.is_finite() {
                return Err(Error::NonFinite { row: k / d, col: k % d });
            }
        }
        Ok(Self { values, mask, n, d })
    }

    /// Fully observed matrix.
    pub fn complete(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(n, d, values, vec![false; n * d])
    }

    /// Build from a row-per-entry representation where `None` is missing.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        let mut mask = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch(format!("row {i} has {} cells, expected {d}", r.len())));
            }
            for c in r {
                values.push(c.unwrap_or(PLACEHOLDER));
                mask.push(c.is_none());
            }
        }
        Self::new(n, d, values, mask)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Observed value of cell (i, j), `None` when masked.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.d + j;
        if self.mask[k] {
            None
        } else {
            Some(self.values[k])
        }
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.d + j]
    }

    /// Raw value slice of row i (masked cells hold the placeholder).
    #[inline]
    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn row_mask(&self, i: usize) -> &[bool] {
        &self.mask[i * self.d..(i + 1) * self.d]
    }

    /// Row i as a vector of options.
    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        (0..self.d).map(|j| self.get(i, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Rows selected by index, in the given order (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        let mut mask = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            values.extend_from_slice(self.row_values(i));
            mask.extend_from_slice(self.row_mask(i));
        }
        Self { values, mask, n: rows.len(), d: self.d }
    }

    /// Copy with the mask of column j replaced.
    pub fn with_column_mask(&self, j: usize, col_mask: &[bool]) -> Result<Self> {
        if col_mask.len() != self.n || j >= self.d {
            return Err(Error::DimensionMismatch("column mask".into()));
        }
        let mut mask = self.mask.clone();
        for (i, &m) in col_mask.iter().enumerate() {
            mask[i * self.d + j] = m;
        }
        Self::new(self.n, self.d, self.values.clone(), mask)
    }
}

/// Regression target; every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self(y))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for TargetVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Summary of the observed entries of one column. `None` when the column
/// has no observed entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub observed_count: usize,
}

/// Validated constructor; see [`IncompleteMatrix::new`].
pub fn make_incomplete(n: usize, d: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<IncompleteMatrix> {
    IncompleteMatrix::new(n, d, values, mask)
}

/// Mean, min, max and count over the unmasked entries of column `j`.
pub fn observed_stats(m: &IncompleteMatrix, j: usize) -> Option<ColumnStats> {
    assert!(j < m.d(), "column {j} out of range for d = {}", m.d());
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut count = 0usize;
    for i in 0..m.n() {
        if let Some(v) = m.get(i, j) {
            sum += v;
            min = min.min(v);
            max = max.max(v);
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    // clamp guards the mean against rounding past the extremes
    let mean = (sum / count as f64).clamp(min, max);
    Some(ColumnStats { mean, min, max, observed_count: count })
}

/// Append one fully observed 0/1 indicator column per original column.
pub fn append_mask(m: &IncompleteMatrix) -> IncompleteMatrix {
    let (n, d) = (m.n(), m.d());
    let mut values = Vec::with_capacity(n * 2 * d);
    let mut mask = Vec::with_capacity(n * 2 * d);
    for i in 0..n {
        values.extend_from_slice(m.row_values(i));
        mask.extend_from_slice(m.row_mask(i));
        for &miss in m.row_mask(i) {
            values.push(if miss { 1.0 } else { 0.0 });
            mask.push(false);
        }
    }
    IncompleteMatrix { values, mask, n, d: 2 * d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn complete_case_has_no_missing() {
        let m = make_incomplete(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![false; 4]).unwrap();
        assert_eq!(m.missing_count(), 0);
        assert!(m.is_complete());
    }

    #[test]
    fn garbage_under_mask_is_canonicalized() {
        let mask = vec![true, false, false, true];
        let a = make_incomplete(2, 2, vec![f64::NAN, 2.0, 3.0, 1e300], mask.clone()).unwrap();
        let b = make_incomplete(2, 2, vec![0.0, 2.0, 3.0, 0.0], mask).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = make_incomplete(2, 2, vec![0.0; 4], vec![false; 6]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn non_finite_observed_cell_rejected() {
        let err = make_incomplete(1, 2, vec![1.0, f64::INFINITY], vec![false; 2]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn stats_two_point_mean() {
        let m = IncompleteMatrix::from_rows(&[vec![Some(1.0)], vec![None], vec![Some(3.0)]]).unwrap();
        let s = observed_stats(&m, 0).unwrap();
        assert_eq!(s, ColumnStats { mean: 2.0, min: 1.0, max: 3.0, observed_count: 2 });
    }

    #[test]
    fn stats_empty_column_is_absent() {
        let m = IncompleteMatrix::from_rows(&[vec![None], vec![None]]).unwrap();
        assert!(observed_stats(&m, 0).is_none());
    }

    #[test]
    fn stats_uniform_mean() {
        let mut r = seed::rng(11);
        let v: Vec<f64> = (0..10_000).map(|_| r.random::<f64>()).collect();
        let m = IncompleteMatrix::complete(10_000, 1, v).unwrap();
        let s = observed_stats(&m, 0).unwrap();
        // sd of the mean is 0.0029; 0.02 is ~7 sd
        assert!((s.mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn append_mask_encodes_indicators() {
        let m = IncompleteMatrix::from_rows(&[vec![None, Some(2.0)]]).unwrap();
        let a = append_mask(&m);
        assert_eq!(a.d(), 4);
        assert_eq!(a.row(0), vec![None, Some(2.0), Some(1.0), Some(0.0)]);
        assert_eq!(a.row_mask(0), &[true, false, false, false]);

        let c = IncompleteMatrix::complete(2, 2, vec![1.0; 4]).unwrap();
        let ac = append_mask(&c);
        assert!((0..2).all(|i| ac.get(i, 2) == Some(0.0) && ac.get(i, 3) == Some(0.0)));

        let e = IncompleteMatrix::from_rows(&[vec![None, Some(1.0)], vec![None, Some(2.0)]]).unwrap();
        let ae = append_mask(&e);
        assert!((0..2).all(|i| ae.get(i, 2) == Some(1.0)));
    }

    fn arb_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<bool>)> {
        (1usize..6, 1usize..5).prop_flat_map(|(n, d)| {
            (Just(n), Just(d), proptest::collection::vec(-1e6f64..1e6, n * d), proptest::collection::vec(any::<bool>(), n * d))
        })
    }

    proptest! {
        #[test]
        fn round_trip_reads_inputs((n, d, values, mask) in arb_matrix()) {
            let m = make_incomplete(n, d, values.clone(), mask.clone()).unwrap();
            for i in 0..n {
                for j in 0..d {
                    let k = i * d + j;
                    prop_assert_eq!(m.is_missing(i, j), mask[k]);
                    if !mask[k] {
                        prop_assert_eq!(m.get(i, j), Some(values[k]));
                    }
                }
            }
        }

        #[test]
        fn stats_ignore_masked_contents((n, d, values, mask) in arb_matrix(), noise in proptest::collection::vec(-1e9f64..1e9, 30)) {
            let a = make_incomplete(n, d, values.clone(), mask.clone()).unwrap();
            let fuzzed: Vec<f64> = values.iter().zip(&mask).enumerate()
                .map(|(k, (&v, &m))| if m { noise[k % noise.len()] } else { v })
                .collect();
            let b = make_incomplete(n, d, fuzzed, mask).unwrap();
            for j in 0..d {
                let (sa, sb) = (observed_stats(&a, j), observed_stats(&b, j));
                prop_assert_eq!(sa.map(|s| s.mean.to_bits()), sb.map(|s| s.mean.to_bits()));
                prop_assert_eq!(sa.map(|s| (s.min.to_bits(), s.max.to_bits(), s.observed_count)),
                                sb.map(|s| (s.min.to_bits(), s.max.to_bits(), s.observed_count)));
            }
        }

        #[test]
        fn double_append((n, d, values, mask) in arb_matrix()) {
            let m = make_incomplete(n, d, values, mask).unwrap();
            let twice = append_mask(&append_mask(&m));
            prop_assert_eq!(twice.d(), 4 * d);
            for i in 0..n {
                for j in 2 * d..4 * d {
                    prop_assert!(!twice.is_missing(i, j));
                }
                // indicators of the first-appended (complete) block are zero
                for j in 3 * d..4 * d {
                    prop_assert_eq!(twice.get(i, j), Some(0.0));
                }
            }
        }
    }
}
