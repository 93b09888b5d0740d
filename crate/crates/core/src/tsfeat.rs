//! Time-series feature machinery: EMA, per-era feature-performance series,
//! lookback slicing, level-2 path signatures and random Fourier features.

use thiserror::Error;

use crate::dataset::TemporalTabularDataset;
use crate::linalg::Matrix;
use crate::rng::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsfeatError {
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("path has {0} rows; need at least 2")]
    PathTooShort(usize),
    #[error("target has zero variance in era {0}")]
    DegenerateTarget(u32),
    #[error("{channels} channels requested from a {dim}-dimensional series")]
    ChannelsExceedDimension { channels: usize, dim: usize },
}

/// Exponential moving average: `y_t = (1-alpha) y_{t-1} + alpha x_t`,
/// initialised at the first observation.
pub fn ema(series: &[f64], alpha: f64) -> Result<Vec<f64>, TsfeatError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TsfeatError::InvalidAlpha(alpha));
    }
    assert!(!series.is_empty(), "ema of empty series");
    let mut out = Vec::with_capacity(series.len());
    let mut state = series[0];
    out.push(state);
    for &x in &series[1..] {
        state = (1.0 - alpha) * state + alpha * x;
        out.push(state);
    }
    Ok(out)
}

/// Per-era correlation of each feature with one target.
///
/// Entry (t, j) is the Pearson correlation of feature j with the target in
/// era t. Features that are constant within an era get value 0; those
/// entries are reported in `degenerate_entries`.
#[derive(Debug, Clone)]
pub struct FeaturePerformanceSeries {
    /// Era index of each row of `values`, ascending.
    pub eras: Vec<u32>,
    /// T x M correlation matrix.
    pub values: Matrix,
    /// (era, feature) pairs where the feature had zero variance.
    pub degenerate_entries: Vec<(u32, usize)>,
}

impl FeaturePerformanceSeries {
    /// Rows restricted to eras <= `cutoff`.
    pub fn up_to(&self, cutoff: u32) -> (Vec<u32>, Matrix) {
        let keep = self.eras.iter().take_while(|&&e| e <= cutoff).count();
        let m = self.values.cols();
        let mut data = Vec::with_capacity(keep * m);
        for t in 0..keep {
            data.extend_from_slice(self.values.row(t));
        }
        (self.eras[..keep].to_vec(), Matrix::from_vec(keep, m, data))
    }
}

pub fn feature_performance(
    dataset: &TemporalTabularDataset,
    target_index: usize,
) -> Result<FeaturePerformanceSeries, TsfeatError> {
    assert!(target_index < dataset.n_targets(), "target index out of range");
    let m = dataset.n_features();
    let mut values = Matrix::zeros(dataset.eras.len(), m);
    let mut eras = Vec::with_capacity(dataset.eras.len());
    let mut degenerate = Vec::new();

    for (t, block) in dataset.eras.iter().enumerate() {
        let y = block.target_column(target_index);
        let n = y.len() as f64;
        let my = y.iter().sum::<f64>() / n;
        let vy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
        if vy == 0.0 {
            return Err(TsfeatError::DegenerateTarget(block.era));
        }
        for j in 0..m {
            let xs = block.feature_column(j);
            let mx = xs.iter().sum::<f64>() / n;
            let mut cov = 0.0;
            let mut vx = 0.0;
            for (x, yv) in xs.iter().zip(&y) {
                cov += (x - mx) * (yv - my);
                vx += (x - mx) * (x - mx);
            }
            if vx == 0.0 {
                degenerate.push((block.era, j));
                values.set(t, j, 0.0);
            } else {
                values.set(t, j, cov / (vx.sqrt() * vy.sqrt()));
            }
        }
        eras.push(block.era);
    }
    Ok(FeaturePerformanceSeries {
        eras,
        values,
        degenerate_entries: degenerate,
    })
}

/// Rows `max(1, t - delta) ..= t` of a series, in 1-based time indexing.
pub fn lookback_slice(series: &Matrix, t: usize, delta: usize) -> Matrix {
    assert!(t >= 1 && t <= series.rows(), "t out of range");
    let start = t.saturating_sub(delta).max(1);
    let m = series.cols();
    let mut data = Vec::with_capacity((t - start + 1) * m);
    for row in start - 1..t {
        data.extend_from_slice(series.row(row));
    }
    Matrix::from_vec(t - start + 1, m, data)
}

/// Width of a level-2 signature of a C-channel path.
pub fn signature_width(channels: usize) -> usize {
    channels + channels * channels
}

/// Level-1 and level-2 signature terms of a piecewise-linear path.
///
/// Level 1 is the total increment per channel. Level 2 follows the iterated
/// sum over segment increments: `S(i,j) = sum_{k<l} d_k^i d_l^j
/// + 1/2 sum_k d_k^i d_k^j`. Output layout: C level-1 terms, then the C*C
/// level-2 block in row-major (i, j) order.
pub fn signature_level2(path: &Matrix) -> Result<Vec<f64>, TsfeatError> {
    let rows = path.rows();
    if rows < 2 {
        return Err(TsfeatError::PathTooShort(rows));
    }
    let c = path.cols();
    let n_seg = rows - 1;
    let mut deltas = Matrix::zeros(n_seg, c);
    for k in 0..n_seg {
        for i in 0..c {
            deltas.set(k, i, path.get(k + 1, i) - path.get(k, i));
        }
    }

    let mut out = vec![0.0; signature_width(c)];
    // Level 1: total increments.
    for i in 0..c {
        out[i] = (0..n_seg).map(|k| deltas.get(k, i)).sum();
    }
    // Level 2 via running prefix sums of earlier increments.
    let mut prefix = vec![0.0; c];
    for k in 0..n_seg {
        for i in 0..c {
            let di = deltas.get(k, i);
            for j in 0..c {
                let dj = deltas.get(k, j);
                out[c + i * c + j] += prefix[i] * dj + 0.5 * di * dj;
            }
        }
        for (p, i) in prefix.iter_mut().zip(0..c) {
            *p += deltas.get(k, i);
        }
    }
    Ok(out)
}

/// Random channel sampling for signatures: `feature_sets` draws of
/// `channels` columns (with replacement) from the source series.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignatureSpec {
    pub channels: usize,
    pub feature_sets: usize,
    pub seed: u64,
}

impl SignatureSpec {
    pub fn output_width(&self) -> usize {
        self.feature_sets * signature_width(self.channels)
    }

    /// The column draw for one feature set; deterministic per (seed, set).
    pub fn channel_draw(&self, dim: usize, set: usize) -> Vec<usize> {
        let mut rng = Rng::from_seed(self.seed).derive("sig-channels", set as u64);
        (0..self.channels)
            .map(|_| rng.next_below(dim as u64) as usize)
            .collect()
    }
}

/// Concatenated level-2 signatures of `feature_sets` random sub-paths.
pub fn random_signature(path: &Matrix, spec: &SignatureSpec) -> Result<Vec<f64>, TsfeatError> {
    if path.rows() < 2 {
        return Err(TsfeatError::PathTooShort(path.rows()));
    }
    let d = path.cols();
    if spec.channels > d {
        return Err(TsfeatError::ChannelsExceedDimension {
            channels: spec.channels,
            dim: d,
        });
    }
    let mut out = Vec::with_capacity(spec.output_width());
    for set in 0..spec.feature_sets {
        let cols = spec.channel_draw(d, set);
        let mut sub = Matrix::zeros(path.rows(), cols.len());
        for r in 0..path.rows() {
            for (ci, &col) in cols.iter().enumerate() {
                sub.set(r, ci, path.get(r, col));
            }
        }
        out.extend(signature_level2(&sub)?);
    }
    Ok(out)
}

/// Fixed frequency grid shared by the sine and cosine blocks.
pub const RFT_GAMMA_GRID: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RftSpec {
    pub feature_sets: usize,
    pub seed: u64,
}

impl RftSpec {
    pub fn output_width(&self) -> usize {
        14 * self.feature_sets
    }
}

/// Random Fourier features: per set, project onto a standard normal
/// direction and emit sin then cos over the gamma grid, scaled by
/// `1/sqrt(7p)`.
pub fn rft(x: &[f64], spec: &RftSpec) -> Vec<f64> {
    assert!(x.iter().all(|v| v.is_finite()), "non-finite rft input");
    let scale = 1.0 / (7.0 * spec.feature_sets as f64).sqrt();
    let mut out = Vec::with_capacity(spec.output_width());
    for set in 0..spec.feature_sets {
        let mut rng = Rng::from_seed(spec.seed).derive("rft-direction", set as u64);
        let u: f64 = x.iter().map(|&v| v * rng.next_normal()).sum();
        for g in RFT_GAMMA_GRID {
            out.push(scale * (g * u).sin());
        }
        for g in RFT_GAMMA_GRID {
            out.push(scale * (g * u).cos());
        }
    }
    out
}
