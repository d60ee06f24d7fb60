//! Population criteria and single-split risks for the uniform model
//! `Y = X1`, `X1 ~ U(0,1)`, with `X1` missing completely at random with
//! probability `p` and a second feature `X2 = X1 * 1{W = 1}`, `P(W = 0) = eta`.
//!
//! `c_mia(s, side, p)` is the population squared error of the split
//! `x1 <= s` when every missing row joins `side`. The Monte-Carlo oracle fits
//! actual stumps on simulated data so each formula can be checked.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::tree::{fit_tree, ProbMode, Side, Strategy, TreeParams};

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
    }
}

/// Root criterion of a complete-data split at `s`: `s(s-1)/4 + 1/12`.
pub fn cart_root_criterion(s: f64) -> Result<f64> {
    check_unit("s", s)?;
    Ok(s * (s - 1.0) / 4.0 + 1.0 / 12.0)
}

/// Criterion of the split at `s` with the missing rows sent to `side`.
/// The right-side value is the mirror `c_mia(1 - s, Left, p)`.
pub fn c_mia(s: f64, side: Side, p: f64) -> Result<f64> {
    check_unit("s", s)?;
    check_unit("p", p)?;
    let s = match side {
        Side::Left => s,
        Side::Right => 1.0 - s,
    };
    let mass = p + (1.0 - p) * s;
    if mass == 0.0 {
        return Err(Error::Degenerate(format!("empty receiving cell at s = {s}, p = {p}")));
    }
    let first = p / 2.0 + (1.0 - p) * s * s / 2.0;
    Ok(1.0 / 3.0 - first * first / mass - (1.0 - p) * (1.0 - s) * ((1.0 + s) / 2.0).powi(2))
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimizer of `c_mia(., side, p)` over `[0, 1]`: a uniform scan with
/// `grid_size` intervals, then golden-section search on the bracketing
/// pair of intervals down to `refine_tol`.
pub fn argmin_c_mia(p: f64, side: Side, grid_size: usize, refine_tol: f64) -> Result<f64> {
    check_unit("p", p)?;
    if p > 0.999 {
        return Err(Error::Degenerate(format!("criterion is flat in s at p = {p}")));
    }
    if grid_size < 2 || !(refine_tol > 0.0) {
        return Err(Error::InvalidParameter("grid_size must be at least 2 and refine_tol positive".into()));
    }
    let f = |s: f64| c_mia(s, side, p).unwrap_or(f64::INFINITY);
    let h = 1.0 / grid_size as f64;
    let (mut best_k, mut best_v) = (0, f64::INFINITY);
    for k in 0..=grid_size {
        let v = f(k as f64 * h);
        if v < best_v {
            best_k = k;
            best_v = v;
        }
    }
    let lo = (best_k.saturating_sub(1)) as f64 * h;
    let hi = ((best_k + 1).min(grid_size)) as f64 * h;
    let s = golden_section(f, lo, hi, refine_tol);
    Ok(if f(s) <= best_v { s } else { best_k as f64 * h })
}

/// Default argmin: 10^4 grid intervals refined to 10^-6.
pub fn s_star_mia(p: f64, side: Side) -> Result<f64> {
    argmin_c_mia(p, side, 10_000, 1e-6)
}

/// `min_s c_mia(s, Left, alpha)`; flat at `alpha = 1` with value 1/12.
pub fn min_c_mia(alpha: f64) -> Result<f64> {
    check_unit("alpha", alpha)?;
    if alpha > 0.999 {
        return c_mia(0.5, Side::Left, alpha);
    }
    c_mia(s_star_mia(alpha, Side::Left)?, Side::Left, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Risks {
    pub mia: f64,
    /// Split at 1/2 with the whole missing block on the better side.
    pub block: f64,
    /// `-11/48 + (3p + 2) / (8 (2p + 1))`, kept for comparison.
    pub block_closed_form: f64,
    pub prob: f64,
    pub surr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub p: f64,
    pub eta: f64,
    /// Left-route MIA threshold at fraction `p`; `None` when `p` is 1.
    pub s_star_mia: Option<f64>,
    pub risks: Risks,
}

/// Closed-form single-split risks.
///
/// The MIA stump splits `X1` while `p <= eta` and otherwise `X2`, whose
/// zeros act like a missing block of mass `eta`; the criterion increases in
/// the fraction, so its risk is `min_s c_mia(s, Left, min(p, eta))`.
pub fn risk_closed_forms(p: f64, eta: f64) -> Result<TheoryPoint> {
    check_unit("p", p)?;
    check_unit("eta", eta)?;
    let s_star = if p > 0.999 { None } else { Some(s_star_mia(p, Side::Left)?) };
    let block = c_mia(0.5, Side::Left, p)?.min(c_mia(0.5, Side::Right, p)?);
    let risks = Risks {
        mia: min_c_mia(p.min(eta))?,
        block,
        block_closed_form: -11.0 / 48.0 + (3.0 * p + 2.0) / (8.0 * (2.0 * p + 1.0)),
        prob: -p * p / 16.0 + p / 8.0 + 1.0 / 48.0,
        surr: 1.0 / 48.0 + 6.0 * eta * p / 48.0,
    };
    Ok(TheoryPoint { p, eta, s_star_mia: s_star, risks })
}

pub fn theory_curves(p_grid: &[f64], eta_set: &[f64]) -> Result<Vec<TheoryPoint>> {
    let mut out = Vec::with_capacity(p_grid.len() * eta_set.len());
    for &eta in eta_set {
        for &p in p_grid {
            out.push(risk_closed_forms(p, eta)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub reps: usize,
}

/// Draws `n` rows of the two-feature model; returns features and response.
pub fn sample_two_feature_model(n: usize, p: f64, eta: f64, seed: u64) -> Result<(IncompleteMatrix, Vec<f64>)> {
    check_unit("p", p)?;
    check_unit("eta", eta)?;
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(2 * n);
    let mut mask = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random();
        let linked = rng.random::<f64>() >= eta;
        let missing = rng.random::<f64>() < p;
        values.extend([x1, if linked { x1 } else { 0.0 }]);
        mask.extend([missing, false]);
        y.push(x1);
    }
    Ok((IncompleteMatrix::new(n, 2, values, mask)?, y))
}

/// Average test squared error of depth-one trees fitted on `n` simulated
/// rows and scored on `n` fresh rows, over `reps` repetitions.
pub fn mc_stump_risk(strategy: Strategy, p: f64, eta: f64, n: usize, reps: usize, seed: u64) -> Result<McEstimate> {
    if n < 2 || reps == 0 {
        return Err(Error::InvalidParameter("need n >= 2 and reps >= 1".into()));
    }
    let params = TreeParams { max_depth: 1, min_leaf: 1, min_split: 2, ..TreeParams::default() };
    let risks = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = seed::derive(seed, &[r as u64]);
            let (x, y) = sample_two_feature_model(n, p, eta, seed::derive(rep_seed, &[0]))?;
            let tree = fit_tree(&x, &y, strategy, &params, seed::derive(rep_seed, &[1]))?;
            let (xt, yt) = sample_two_feature_model(n, p, eta, seed::derive(rep_seed, &[2]))?;
            let pred = tree.predict_matrix(&xt, seed::derive(rep_seed, &[3]), ProbMode::Stochastic)?;
            Ok(pred.iter().zip(&yt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = risks.iter().sum::<f64>() / reps as f64;
    let std_error = if reps > 1 {
        let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { mean, std_error, n, reps })
}
