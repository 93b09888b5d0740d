//! Layer-2 combiners: equal-weight rank averaging and non-negative ridge.
//!
//! Member predictions are percentile-rank-normalised per era before any
//! combining, so combiners only ever see (0, 1) ranks. The ridge combiner is
//! refit for every target era on the pooled rows of a trailing window that
//! ends one embargo before the target era.

use serde::{Deserialize, Serialize};

use crate::dataset::TemporalTabularDataset;
use crate::linalg::Matrix;
use crate::rank::percentile_ranks;
use crate::series::PredictionSeries;

use super::DeepIlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerKind {
    EqualWeighted,
    NonNegativeRidge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combiner {
    pub kind: CombinerKind,
    /// Ridge penalty; only used by the non-negative ridge.
    pub alpha: f64,
    /// Number of trailing eras pooled for the ridge fit.
    pub training_window: u32,
    /// Gap between the training window and the target era.
    pub embargo: u32,
}

impl Combiner {
    pub fn equal_weighted() -> Self {
        Combiner {
            kind: CombinerKind::EqualWeighted,
            alpha: 1e-4,
            training_window: 25,
            embargo: 6,
        }
    }

    pub fn non_negative_ridge() -> Self {
        Combiner {
            kind: CombinerKind::NonNegativeRidge,
            ..Combiner::equal_weighted()
        }
    }

    pub fn strategy_name(&self) -> &'static str {
        match self.kind {
            CombinerKind::EqualWeighted => "equal_weighted",
            CombinerKind::NonNegativeRidge => "nonneg_ridge",
        }
    }

    pub fn validate(&self) -> Result<(), DeepIlError> {
        if !(self.alpha > 0.0) {
            return Err(DeepIlError::InvalidPlan(format!(
                "combiner alpha {} must be > 0",
                self.alpha
            )));
        }
        if self.training_window < 2 {
            return Err(DeepIlError::InvalidPlan(
                "combiner training_window must be >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Training window for a target era: the `training_window` eras ending
    /// `embargo + 1` before it.
    pub fn window_for(&self, era: u32) -> (u32, u32) {
        let hi = era - self.embargo - 1;
        let lo = hi + 1 - self.training_window;
        (lo, hi)
    }
}

/// Outcome of combining one era. `ridge_fallback` marks eras where every
/// ridge weight collapsed to zero and the equal-weight path was used.
#[derive(Debug, Clone, PartialEq)]
pub struct CombineOutcome {
    pub scores: Vec<f64>,
    pub ridge_fallback: bool,
}

/// Per-era member matrix: one percentile-rank column per member, rows in
/// dataset row order for that era.
fn rank_matrix(
    members: &[PredictionSeries],
    era: u32,
) -> Result<Matrix, DeepIlError> {
    let k = members.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut n = 0;
    for m in members {
        let entry = m
            .get(era)
            .ok_or(DeepIlError::WindowNotCovered { era, model: m.model_id.clone() })?;
        let ranks = percentile_ranks(&entry.scores);
        n = ranks.len();
        columns.push(ranks);
    }
    let mut out = Matrix::zeros(n, k);
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            out.set(r, c, v);
        }
    }
    Ok(out)
}

/// Non-negative ridge by cyclic coordinate descent on the Gram system.
/// Minimises `||R w - y||^2 + alpha ||w||^2` subject to `w >= 0`.
pub fn nonneg_ridge(gram: &Matrix, rhs: &[f64], alpha: f64) -> Vec<f64> {
    let k = rhs.len();
    let mut w = vec![0.0; k];
    let mut gw = vec![0.0; k]; // gram * w, maintained incrementally
    for _ in 0..100_000 {
        let mut max_delta = 0.0f64;
        for j in 0..k {
            let denom = gram.get(j, j) + alpha;
            let num = rhs[j] - (gw[j] - gram.get(j, j) * w[j]);
            let new = (num / denom).max(0.0);
            let delta = new - w[j];
            if delta != 0.0 {
                for i in 0..k {
                    gw[i] += gram.get(i, j) * delta;
                }
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < 1e-12 && kkt_residual(gram, rhs, alpha, &w) < 1e-10 {
            break;
        }
    }
    w
}

/// KKT stationarity residual for the non-negative ridge objective: the
/// gradient is `2 (G w - rhs + alpha w)`; active coordinates must have zero
/// gradient, inactive ones non-negative gradient.
pub fn kkt_residual(gram: &Matrix, rhs: &[f64], alpha: f64, w: &[f64]) -> f64 {
    let k = rhs.len();
    let mut worst = 0.0f64;
    for j in 0..k {
        let mut gw = 0.0;
        for i in 0..k {
            gw += gram.get(j, i) * w[i];
        }
        let grad = 2.0 * (gw - rhs[j] + alpha * w[j]);
        let viol = if w[j] > 0.0 { grad.abs() } else { (-grad).max(0.0) };
        worst = worst.max(viol);
    }
    worst
}

/// Combines member predictions for one target era.
pub fn combine(
    members: &[PredictionSeries],
    combiner: &Combiner,
    era: u32,
    dataset: &TemporalTabularDataset,
    scoring_target: usize,
) -> Result<CombineOutcome, DeepIlError> {
    combiner.validate()?;
    if members.is_empty() {
        return Err(DeepIlError::InvalidPlan("no member series to combine".into()));
    }
    let target_matrix = rank_matrix(members, era)?;
    let k = members.len();

    let equal_weight = |m: &Matrix| -> Vec<f64> {
        (0..m.rows())
            .map(|r| m.row(r).iter().sum::<f64>() / k as f64)
            .collect()
    };

    match combiner.kind {
        CombinerKind::EqualWeighted => Ok(CombineOutcome {
            scores: equal_weight(&target_matrix),
            ridge_fallback: false,
        }),
        CombinerKind::NonNegativeRidge => {
            let (lo, hi) = combiner.window_for(era);
            // Pool rank rows and centred targets over the window.
            let mut pooled_rows: Vec<Vec<f64>> = Vec::new();
            let mut pooled_y: Vec<f64> = Vec::new();
            for block in dataset.eras.iter().filter(|b| b.era >= lo && b.era <= hi) {
                let m = rank_matrix(members, block.era)?;
                if m.rows() != block.n_rows() {
                    return Err(DeepIlError::WindowNotCovered {
                        era: block.era,
                        model: "row count mismatch".into(),
                    });
                }
                for r in 0..m.rows() {
                    pooled_rows.push(m.row(r).to_vec());
                    pooled_y.push(block.target(r, scoring_target));
                }
            }
            if pooled_rows.is_empty() {
                return Err(DeepIlError::WindowNotCovered {
                    era,
                    model: format!("empty ridge window {lo}..{hi}"),
                });
            }
            let r = Matrix::from_rows(pooled_rows);
            let gram = r.gram();
            let rhs = r.transpose_vec_mul(&pooled_y);
            let w = nonneg_ridge(&gram, &rhs, combiner.alpha);
            if w.iter().all(|&v| v == 0.0) {
                return Ok(CombineOutcome {
                    scores: equal_weight(&target_matrix),
                    ridge_fallback: true,
                });
            }
            Ok(CombineOutcome {
                scores: target_matrix.vec_mul(&w),
                ridge_fallback: false,
            })
        }
    }
}
