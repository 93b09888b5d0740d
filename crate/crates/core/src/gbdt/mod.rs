//! Gradient-boosted regression trees under squared loss.
//!
//! Squared loss makes the boosting residual simply `y - f(x)`, so each round
//! fits one depth-limited tree to the current residuals and applies it with
//! the learning rate. Models support prefix snapshots (the first k trees as
//! a cheaper model), split-count feature importance and a rank-correlation
//! structural similarity between two models.

mod persist;
mod tree;

pub use persist::{load_model, save_model};
pub use tree::{RegressionTree, TreeNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::metrics::pearson;
use crate::rank::percentile_ranks;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("insufficient rows: {rows} (need more than min_samples_leaf = {min_samples_leaf})")]
    InsufficientRows { rows: usize, min_samples_leaf: usize },
    #[error("feature mismatch: matrix has {got} columns, model needs {need}")]
    FeatureMismatch { got: usize, need: usize },
    #[error("snapshot length {requested} out of range (model has {available} trees)")]
    OutOfRange { requested: usize, available: usize },
    #[error("both models have all-equal feature importance")]
    DegenerateImportance,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("model file error: {0}")]
    Persist(String),
}

/// Learning rate tying a budget of boosting rounds to its matched rate.
pub fn ansatz_learning_rate(boosting_rounds: u32) -> f64 {
    assert!(boosting_rounds >= 1);
    50.0 / f64::from(boosting_rounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtHyperparams {
    pub boosting_rounds: u32,
    pub learning_rate: f64,
    pub max_depth: u32,
    pub min_samples_leaf: usize,
    pub row_subsample: f64,
    pub feature_subsample_per_tree: f64,
    pub seed: u64,
}

impl GbdtHyperparams {
    /// The default hyperparameter set: depth 4, 0.75 row and feature
    /// subsampling, 10 samples per leaf, learning rate 50/B.
    pub fn ansatz(boosting_rounds: u32, seed: u64) -> Self {
        GbdtHyperparams {
            boosting_rounds,
            learning_rate: ansatz_learning_rate(boosting_rounds),
            max_depth: 4,
            min_samples_leaf: 10,
            row_subsample: 0.75,
            feature_subsample_per_tree: 0.75,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GbdtError> {
        let fail = |m: String| Err(GbdtError::InvalidHyperparams(m));
        if self.boosting_rounds == 0 {
            return fail("boosting_rounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.max_depth == 0 {
            return fail("max_depth must be >= 1".into());
        }
        if self.min_samples_leaf == 0 {
            return fail("min_samples_leaf must be >= 1".into());
        }
        for (name, v) in [
            ("row_subsample", self.row_subsample),
            ("feature_subsample_per_tree", self.feature_subsample_per_tree),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} {v} outside (0, 1]"));
            }
        }
        Ok(())
    }
}

/// A trained model: base prediction plus an ordered list of trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_prediction: f64,
    pub hyperparams: GbdtHyperparams,
    pub trees: Vec<RegressionTree>,
    /// Sorted global feature subset the model was allowed to split on.
    pub trained_feature_set: Vec<usize>,
    /// Width of the training matrix; importance vectors use this length.
    pub n_features: usize,
}

impl GbdtModel {
    /// Split counts per feature across all trees.
    pub fn feature_importance(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_features];
        for tree in &self.trees {
            tree.count_splits(&mut counts);
        }
        counts
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_prediction + self.hyperparams.learning_rate * sum
    }
}

/// Trains on all columns of `x`.
pub fn fit(x: &Matrix, y: &[f64], hp: &GbdtHyperparams) -> Result<GbdtModel, GbdtError> {
    let all: Vec<usize> = (0..x.cols()).collect();
    fit_with_features(x, y, hp, &all)
}

/// Trains with splits restricted to `allowed_features` (sorted, distinct).
pub fn fit_with_features(
    x: &Matrix,
    y: &[f64],
    hp: &GbdtHyperparams,
    allowed_features: &[usize],
) -> Result<GbdtModel, GbdtError> {
    hp.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(GbdtError::InvalidHyperparams(format!(
            "target length {} does not match {} rows",
            y.len(),
            n
        )));
    }
    if n <= hp.min_samples_leaf {
        return Err(GbdtError::InsufficientRows {
            rows: n,
            min_samples_leaf: hp.min_samples_leaf,
        });
    }
    assert!(
        allowed_features.windows(2).all(|w| w[0] < w[1])
            && allowed_features.last().is_none_or(|&j| j < x.cols()),
        "allowed_features must be sorted, distinct and within the matrix"
    );
    assert!(!allowed_features.is_empty(), "empty feature set");
    assert!(y.iter().all(|v| v.is_finite()), "non-finite target");

    let base = y.iter().sum::<f64>() / n as f64;
    let mut model = GbdtModel {
        base_prediction: base,
        hyperparams: hp.clone(),
        trees: Vec::new(),
        trained_feature_set: allowed_features.to_vec(),
        n_features: x.cols(),
    };

    // Constant target: the base prediction already fits exactly.
    if y.iter().all(|&v| v == y[0]) {
        return Ok(model);
    }

    let root = Rng::from_seed(hp.seed);
    let n_rows_per_tree = ((hp.row_subsample * n as f64).floor() as usize).clamp(1, n);
    let n_feats_per_tree = ((hp.feature_subsample_per_tree * allowed_features.len() as f64)
        .floor() as usize)
        .clamp(1, allowed_features.len());

    let mut current: Vec<f64> = vec![base; n];
    let mut residuals: Vec<f64> = vec![0.0; n];
    for round in 0..hp.boosting_rounds {
        for i in 0..n {
            residuals[i] = y[i] - current[i];
        }
        // Per-round streams keyed by (seed, round) keep subsampling
        // reproducible independently of execution order.
        let rows: Vec<usize> = if n_rows_per_tree == n {
            (0..n).collect()
        } else {
            root.derive("rows", u64::from(round))
                .sample_without_replacement(n, n_rows_per_tree)
        };
        let feats: Vec<usize> = if n_feats_per_tree == allowed_features.len() {
            allowed_features.to_vec()
        } else {
            root.derive("feats", u64::from(round))
                .sample_without_replacement(allowed_features.len(), n_feats_per_tree)
                .into_iter()
                .map(|i| allowed_features[i])
                .collect()
        };
        let tree = tree::grow_tree(x, &residuals, rows, &feats, hp.max_depth, hp.min_samples_leaf);
        for i in 0..n {
            current[i] += hp.learning_rate * tree.predict_row(x.row(i));
        }
        model.trees.push(tree);
    }
    Ok(model)
}

/// Predicts every row of `x`.
pub fn predict(model: &GbdtModel, x: &Matrix) -> Result<Vec<f64>, GbdtError> {
    let need = model
        .trained_feature_set
        .last()
        .map_or(0, |&j| j + 1)
        .max(1);
    if x.cols() < need {
        return Err(GbdtError::FeatureMismatch {
            got: x.cols(),
            need,
        });
    }
    Ok((0..x.rows()).map(|r| model.predict_row(x.row(r))).collect())
}

/// The model restricted to its first `k_trees` trees.
pub fn snapshot(model: &GbdtModel, k_trees: usize) -> Result<GbdtModel, GbdtError> {
    if k_trees > model.trees.len() {
        return Err(GbdtError::OutOfRange {
            requested: k_trees,
            available: model.trees.len(),
        });
    }
    let mut out = model.clone();
    out.trees.truncate(k_trees);
    Ok(out)
}

/// Result of a structural comparison. `degenerate` flags the convention used
/// when exactly one model has all-equal importance (similarity 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub degenerate: bool,
}

/// Correlation between the rank-normalised split-count importances of two
/// models over the same feature universe.
pub fn structural_similarity(a: &GbdtModel, b: &GbdtModel) -> Result<Similarity, GbdtError> {
    assert_eq!(
        a.n_features, b.n_features,
        "models live on different feature universes"
    );
    let ia: Vec<f64> = a.feature_importance().iter().map(|&c| c as f64).collect();
    let ib: Vec<f64> = b.feature_importance().iter().map(|&c| c as f64).collect();
    let flat_a = ia.iter().all(|&v| v == ia[0]);
    let flat_b = ib.iter().all(|&v| v == ib[0]);
    match (flat_a, flat_b) {
        (true, true) => Err(GbdtError::DegenerateImportance),
        (true, false) | (false, true) => Ok(Similarity {
            value: 0.0,
            degenerate: true,
        }),
        (false, false) => {
            let ra = percentile_ranks(&ia);
            let rb = percentile_ranks(&ib);
            let value = pearson(&ra, &rb)
                .expect("non-flat ranks cannot have zero variance");
            Ok(Similarity {
                value,
                degenerate: false,
            })
        }
    }
}
