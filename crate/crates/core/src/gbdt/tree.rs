//! Depth-wise regression trees over low-cardinality features.
//!
//! Split finding enumerates every boundary between distinct feature values
//! within a node, which is exact (binned features have at most five levels,
//! so at most four candidate thresholds). Ties on gain are broken toward the
//! lowest feature index, then the lowest threshold, so builds are fully
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Number of internal nodes splitting on each feature, over `n_features`.
    pub fn count_splits(&self, counts: &mut [u64]) {
        for node in &self.nodes {
            if let TreeNode::Split { feature, .. } = node {
                counts[*feature] += 1;
            }
        }
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Finds the gain-maximising split of `rows` over `features`, or None when
/// no split satisfies the leaf-size constraint with positive gain.
fn best_split(
    x: &Matrix,
    residuals: &[f64],
    rows: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<BestSplit> {
    let n = rows.len();
    if n < 2 * min_samples_leaf {
        return None;
    }
    let total_sum: f64 = rows.iter().map(|&r| residuals[r]).sum();
    let parent_score = total_sum * total_sum / n as f64;

    let mut best: Option<BestSplit> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &feature in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x.get(r, feature), residuals[r])));
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN feature value"));

        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        let mut i = 0;
        while i < n {
            // Advance over one distinct value.
            let v = pairs[i].0;
            while i < n && pairs[i].0 == v {
                left_sum += pairs[i].1;
                left_n += 1;
                i += 1;
            }
            if i == n {
                break;
            }
            if left_n < min_samples_leaf || n - left_n < min_samples_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_n = n - left_n;
            let score = left_sum * left_sum / left_n as f64
                + right_sum * right_sum / right_n as f64;
            let gain = score - parent_score;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    feature,
                    threshold: (v + pairs[i].0) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

/// Grows one depth-limited tree on the given row and feature subsets,
/// fitting the residual vector with mean-value leaves.
pub fn grow_tree(
    x: &Matrix,
    residuals: &[f64],
    rows: Vec<usize>,
    features: &[usize],
    max_depth: u32,
    min_samples_leaf: usize,
) -> RegressionTree {
    let mut nodes: Vec<TreeNode> = Vec::new();
    // Queue of (node slot, rows, depth), processed in creation order so the
    // growth is depth-wise.
    let mut queue: Vec<(usize, Vec<usize>, u32)> = Vec::new();
    nodes.push(TreeNode::Leaf { value: 0.0 });
    queue.push((0, rows, 0));

    let mut at = 0;
    while at < queue.len() {
        let (slot, node_rows, depth) = std::mem::replace(&mut queue[at], (0, Vec::new(), 0));
        at += 1;

        let mean =
            node_rows.iter().map(|&r| residuals[r]).sum::<f64>() / node_rows.len() as f64;
        let split = if depth < max_depth {
            best_split(x, residuals, &node_rows, features, min_samples_leaf)
        } else {
            None
        };
        match split {
            None => nodes[slot] = TreeNode::Leaf { value: mean },
            Some(s) => {
                let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
                for &r in &node_rows {
                    if x.get(r, s.feature) <= s.threshold {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                queue.push((left, left_rows, depth + 1));
                queue.push((right, right_rows, depth + 1));
            }
        }
    }
    RegressionTree { nodes }
}
