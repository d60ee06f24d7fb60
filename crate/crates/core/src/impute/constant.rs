use log::warn;

use crate::data::{append_mask, observed_stats, IncompleteMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ConstantKind {
    /// Training mean of the observed entries.
    Mean,
    /// `min_j - max(1, max_j - min_j)`: strictly below the observed range.
    OutOfRange,
    /// User-supplied fill values, one per column.
    Custom(Vec<f64>),
}

impl ConstantKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstantKind::Mean => "mean",
            ConstantKind::OutOfRange => "oor",
            ConstantKind::Custom(_) => "custom",
        }
    }
}

/// Per-column constant fill values learned on a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantImputer {
    pub alphas: Vec<f64>,
    pub kind: ConstantKind,
    /// Columns with no observed training value (filled with 0).
    pub empty_columns: Vec<usize>,
}

pub fn fit_constant(train: &IncompleteMatrix, kind: ConstantKind) -> Result<ConstantImputer> {
    let d = train.d();
    if let ConstantKind::Custom(v) = &kind {
        if v.len() != d {
            return Err(Error::DimensionMismatch(format!("{} fill values for {d} columns", v.len())));
        }
        return Ok(ConstantImputer { alphas: v.clone(), kind, empty_columns: Vec::new() });
    }
    let mut alphas = Vec::with_capacity(d);
    let mut empty_columns = Vec::new();
    for j in 0..d {
        match observed_stats(train, j) {
            Some(s) => alphas.push(match kind {
                ConstantKind::Mean => s.mean,
                _ => s.min - (s.max - s.min).max(1.0),
            }),
            None => {
                warn!("column {} has no observed value; filling with 0", j + 1);
                empty_columns.push(j);
                alphas.push(0.0);
            }
        }
    }
    Ok(ConstantImputer { alphas, kind, empty_columns })
}

impl ConstantImputer {
    /// Replace every masked cell of column j by `alphas[j]`; optionally
    /// append the missingness indicators of `x`.
    pub fn transform(&self, x: &IncompleteMatrix, with_mask: bool) -> Result<IncompleteMatrix> {
        if x.d() != self.alphas.len() {
            return Err(Error::DimensionMismatch(format!("imputer fitted on {} columns, got {}", self.alphas.len(), x.d())));
        }
        let (n, d) = (x.n(), x.d());
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                values.push(x.get(i, j).unwrap_or(self.alphas[j]));
            }
        }
        let filled = IncompleteMatrix::complete(n, d, values)?;
        if !with_mask {
            return Ok(filled);
        }
        let ind = append_mask(x);
        let mut values = Vec::with_capacity(n * 2 * d);
        for i in 0..n {
            values.extend_from_slice(filled.row_values(i));
            values.extend_from_slice(&ind.row_values(i)[d..]);
        }
        IncompleteMatrix::complete(n, 2 * d, values)
    }
}
