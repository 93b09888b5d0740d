//! Factor-timing baselines.
//!
//! A factor-timing model turns a forecast of next-era feature performance
//! into cross-sectional row scores: the forecast vector is rank-normalised
//! to (-0.5, 0.5), optionally truncated, and applied as linear weights over
//! the era's feature matrix. Forecasters are EMA (per-feature, no
//! regression) or ridge regressions on signature / random-Fourier
//! transforms of the feature-performance history, averaged over a fixed
//! regularisation grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{EraBlock, TemporalTabularDataset};
use crate::linalg::{cholesky_solve, LinalgError, Matrix};
use crate::rank::centered_ranks;
use crate::series::PredictionSeries;
use crate::tsfeat::{
    self, ema, feature_performance, lookback_slice, rft, signature_width, RftSpec, SignatureSpec,
    TsfeatError,
};

/// Regularisation grid shared by all ridge forecasters.
pub const RIDGE_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Error)]
pub enum FactorTimingError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ridge system could not be factorised: {0}")]
    SingularSystem(#[from] LinalgError),
    #[error("era {era}: only {have} history eras available, need {need}")]
    InsufficientHistory { era: u32, have: usize, need: usize },
    #[error(transparent)]
    Tsfeat(#[from] TsfeatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forecaster {
    /// Per-feature exponential moving average of the performance series.
    Ema { alpha: f64 },
    /// Ridge on random level-2 signatures of the history path.
    Signature {
        complexity: f64,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default)]
        lookback: Option<usize>,
        seed: u64,
    },
    /// Ridge on random Fourier features of the latest performance row.
    Rft { complexity: f64, seed: u64 },
}

fn default_channels() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTimingConfig {
    pub forecaster: Forecaster,
    /// Optional truncation bounds (lower, upper) on the centred ranks.
    #[serde(default)]
    pub truncation: Option<(f64, f64)>,
    /// Embargo: era i sees feature performance up to era i - embargo only.
    pub embargo: u32,
}

impl FactorTimingConfig {
    pub fn validate(&self) -> Result<(), FactorTimingError> {
        if let Some((l, u)) = self.truncation {
            if !(-0.5 < l && l < u && u < 0.5) {
                return Err(FactorTimingError::DimensionMismatch(format!(
                    "truncation bounds ({l}, {u}) must satisfy -0.5 < l < u < 0.5"
                )));
            }
        }
        match &self.forecaster {
            Forecaster::Ema { alpha } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(FactorTimingError::Tsfeat(TsfeatError::InvalidAlpha(*alpha)));
                }
            }
            Forecaster::Signature { complexity, channels, .. } => {
                if !(*complexity > 0.0) || *channels < 2 {
                    return Err(FactorTimingError::DimensionMismatch(format!(
                        "signature forecaster needs complexity > 0 and channels >= 2, got {complexity} / {channels}"
                    )));
                }
            }
            Forecaster::Rft { complexity, .. } => {
                if !(*complexity > 0.0) {
                    return Err(FactorTimingError::DimensionMismatch(format!(
                        "rft complexity {complexity} must be > 0"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stable id used for output files and reports.
    pub fn id(&self) -> String {
        match &self.forecaster {
            Forecaster::Ema { alpha } => format!("ft_ema_{alpha}"),
            Forecaster::Signature { complexity, .. } => format!("ft_sig_c{complexity}"),
            Forecaster::Rft { complexity, .. } => format!("ft_rft_c{complexity}"),
        }
    }
}

/// Rank the forecasts, truncate if asked, and score rows linearly.
pub fn factor_timing_predict(
    forecasts: &[f64],
    block: &EraBlock,
    truncation: Option<(f64, f64)>,
) -> Result<Vec<f64>, FactorTimingError> {
    if forecasts.len() != block.n_features() {
        return Err(FactorTimingError::DimensionMismatch(format!(
            "{} forecasts for {} features",
            forecasts.len(),
            block.n_features()
        )));
    }
    let mut weights = centered_ranks(forecasts);
    if let Some((l, u)) = truncation {
        for w in &mut weights {
            *w = w.clamp(l, u);
        }
    }
    Ok((0..block.n_rows())
        .map(|r| {
            block
                .feature_row(r)
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| f64::from(x) * w)
                .sum()
        })
        .collect())
}

/// Ridge forecaster averaged over the regularisation grid. Coefficients are
/// fitted against mean-centred targets; the per-output mean acts as an
/// unpenalised intercept.
#[derive(Debug, Clone)]
pub struct RidgeForecaster {
    /// Per-alpha coefficient matrices, F x M.
    pub coefficients: Vec<Matrix>,
    /// Column means of the training targets.
    pub intercept: Vec<f64>,
}

impl RidgeForecaster {
    /// Mean over the grid of the per-alpha linear forecasts.
    pub fn forecast(&self, z: &[f64]) -> Vec<f64> {
        let m = self.intercept.len();
        let mut out = self.intercept.clone();
        for beta in &self.coefficients {
            for c in 0..m {
                let mut acc = 0.0;
                for (f, zv) in z.iter().enumerate() {
                    acc += zv * beta.get(f, c);
                }
                out[c] += acc / self.coefficients.len() as f64;
            }
        }
        out
    }

    /// Forecast under a single grid entry; used to check the averaging
    /// contract.
    pub fn forecast_at(&self, grid_index: usize, z: &[f64]) -> Vec<f64> {
        let beta = &self.coefficients[grid_index];
        (0..self.intercept.len())
            .map(|c| {
                self.intercept[c]
                    + z.iter()
                        .enumerate()
                        .map(|(f, zv)| zv * beta.get(f, c))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Solves the ridge normal equations for every grid alpha.
pub fn fit_ridge_averaged(
    z: &Matrix,
    y: &Matrix,
    grid: &[f64],
) -> Result<RidgeForecaster, FactorTimingError> {
    if z.rows() != y.rows() || z.rows() < 2 {
        return Err(FactorTimingError::DimensionMismatch(format!(
            "design has {} rows, targets {} (need >= 2)",
            z.rows(),
            y.rows()
        )));
    }
    let t = z.rows();
    let f = z.cols();
    let m = y.cols();

    let mut intercept = vec![0.0; m];
    for c in 0..m {
        intercept[c] = (0..t).map(|r| y.get(r, c)).sum::<f64>() / t as f64;
    }
    let mut centred = Matrix::zeros(t, m);
    for r in 0..t {
        for c in 0..m {
            centred.set(r, c, y.get(r, c) - intercept[c]);
        }
    }

    let gram = z.gram();
    // Z^T * centred targets, F x M.
    let mut rhs = Matrix::zeros(f, m);
    for r in 0..t {
        let row = z.row(r);
        for c in 0..m {
            let yv = centred.get(r, c);
            if yv == 0.0 {
                continue;
            }
            for (j, &zv) in row.iter().enumerate() {
                let cur = rhs.get(j, c);
                rhs.set(j, c, cur + zv * yv);
            }
        }
    }

    let mut coefficients = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let mut lhs = gram.clone();
        for d in 0..f {
            lhs.set(d, d, lhs.get(d, d) + alpha);
        }
        coefficients.push(cholesky_solve(&lhs, &rhs)?);
    }
    Ok(RidgeForecaster {
        coefficients,
        intercept,
    })
}

/// Number of transformed features for a history of length `t`: complexity
/// times series length, rounded up.
fn complexity_width(complexity: f64, t: usize) -> usize {
    ((complexity * t as f64).ceil() as usize).max(1)
}

/// Builds one transformed design row from the history up to time `t`
/// (1-based position within `history`), truncated to `width` columns.
fn transform_row(
    forecaster: &Forecaster,
    history: &Matrix,
    t: usize,
    width: usize,
) -> Result<Vec<f64>, FactorTimingError> {
    match forecaster {
        Forecaster::Ema { .. } => unreachable!("ema does not use a design matrix"),
        Forecaster::Signature {
            channels,
            lookback,
            seed,
            ..
        } => {
            let per_set = signature_width(*channels);
            let spec = SignatureSpec {
                channels: *channels,
                feature_sets: width.div_ceil(per_set),
                seed: *seed,
            };
            let path = lookback_slice(history, t, lookback.unwrap_or(usize::MAX - 1));
            let mut row = tsfeat::random_signature(&path, &spec)?;
            row.truncate(width);
            Ok(row)
        }
        Forecaster::Rft { seed, .. } => {
            let spec = RftSpec {
                feature_sets: width.div_ceil(14),
                seed: *seed,
            };
            let mut row = rft(history.row(t - 1), &spec);
            row.truncate(width);
            Ok(row)
        }
    }
}

/// One-step-ahead forecast of the next feature-performance row given the
/// history rows observed so far.
fn forecast_next(
    cfg: &FactorTimingConfig,
    history: &Matrix,
    era: u32,
) -> Result<Vec<f64>, FactorTimingError> {
    let t_hist = history.rows();
    match &cfg.forecaster {
        Forecaster::Ema { alpha } => {
            let m = history.cols();
            let mut out = vec![0.0; m];
            for j in 0..m {
                let series: Vec<f64> = (0..t_hist).map(|r| history.get(r, j)).collect();
                out[j] = *ema(&series, *alpha)?.last().expect("non-empty history");
            }
            Ok(out)
        }
        Forecaster::Signature { complexity, .. } | Forecaster::Rft { complexity, .. } => {
            // Training pairs: transform of history up to time t predicts row
            // t+1. Signatures need a path of at least 2 rows, so start at 2.
            let first_t = match cfg.forecaster {
                Forecaster::Signature { .. } => 2,
                _ => 1,
            };
            let n_train = (t_hist - 1).saturating_sub(first_t - 1);
            if n_train < 2 {
                return Err(FactorTimingError::InsufficientHistory {
                    era,
                    have: t_hist,
                    need: first_t + 2,
                });
            }
            let width = complexity_width(*complexity, t_hist);
            let mut design_rows = Vec::with_capacity(n_train);
            let mut target_rows = Vec::with_capacity(n_train);
            for t in first_t..t_hist {
                design_rows.push(transform_row(&cfg.forecaster, history, t, width)?);
                target_rows.push(history.row(t).to_vec());
            }
            let z = Matrix::from_rows(design_rows);
            let y = Matrix::from_rows(target_rows);
            let model = fit_ridge_averaged(&z, &y, &RIDGE_GRID)?;
            let z_now = transform_row(&cfg.forecaster, history, t_hist, width)?;
            Ok(model.forecast(&z_now))
        }
    }
}

/// Walk-forward factor-timing backtest over `[start_era, end_era]`.
///
/// For each era i the forecaster sees feature-performance rows of eras
/// `<= i - embargo` only, produces a one-step-ahead forecast, and the
/// factor-timing step scores era i's rows.
pub fn run_factor_timing_backtest(
    dataset: &TemporalTabularDataset,
    cfg: &FactorTimingConfig,
    target_index: usize,
    start_era: u32,
    end_era: u32,
) -> Result<PredictionSeries, FactorTimingError> {
    cfg.validate()?;
    let perf = feature_performance(dataset, target_index)?;
    let mut series = PredictionSeries::new(cfg.id(), 1, start_era);

    for block in dataset
        .eras
        .iter()
        .filter(|b| b.era >= start_era && b.era <= end_era)
    {
        let cutoff = block.era.saturating_sub(cfg.embargo);
        let (hist_eras, history) = perf.up_to(cutoff);
        if hist_eras.len() < 2 {
            return Err(FactorTimingError::InsufficientHistory {
                era: block.era,
                have: hist_eras.len(),
                need: 2,
            });
        }
        let forecast = forecast_next(cfg, &history, block.era)?;
        let scores = factor_timing_predict(&forecast, block, cfg.truncation)?;
        series.insert(block.era, block.row_ids.clone(), scores);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_stream, RegimeStyle, SynthConfig};

    fn block2x2() -> EraBlock {
        EraBlock::new(
            1,
            vec!["a".into(), "b".into()],
            vec![2, -2, 1, 0],
            vec![0.25, -0.25],
            2,
            1,
        )
    }

    #[test]
    fn predict_follows_the_three_steps() {
        let block = block2x2();
        let z = factor_timing_predict(&[0.1, 0.9], &block, None).unwrap();
        // Ranks of [0.1, 0.9] -> centred (-0.25, 0.25).
        assert_eq!(z, vec![2.0 * -0.25 + -2.0 * 0.25, 1.0 * -0.25 + 0.0 * 0.25]);
    }

    #[test]
    fn tied_forecasts_zero_the_weights() {
        let block = block2x2();
        let z = factor_timing_predict(&[0.4, 0.4], &block, None).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn truncation_clamps_the_ranks() {
        let block = block2x2();
        let free = factor_timing_predict(&[0.1, 0.9], &block, None).unwrap();
        let clamped = factor_timing_predict(&[0.1, 0.9], &block, Some((-0.1, 0.1))).unwrap();
        for (f, c) in free.iter().zip(&clamped) {
            assert!((c - f * 0.4).abs() < 1e-15, "clamp scales -0.25 to -0.1");
        }
    }

    #[test]
    fn predict_is_rank_invariant() {
        let block = block2x2();
        let a = factor_timing_predict(&[0.1, 0.9], &block, None).unwrap();
        let b = factor_timing_predict(&[-5.0, 123.0], &block, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let block = block2x2();
        assert!(matches!(
            factor_timing_predict(&[0.1], &block, None),
            Err(FactorTimingError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_design_predicts_the_target_mean() {
        let z = Matrix::zeros(4, 2);
        let y = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0], vec![6.0]]);
        let model = fit_ridge_averaged(&z, &y, &RIDGE_GRID).unwrap();
        let f = model.forecast(&[0.0, 0.0]);
        assert!((f[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_ridge_matches_the_closed_form() {
        // Mean-zero y so the intercept is 0 and beta = (Z'Z + a)^-1 Z'y.
        let z = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![-3.0]]);
        let y = Matrix::from_rows(vec![vec![2.0], vec![1.0], vec![-3.0]]);
        let model = fit_ridge_averaged(&z, &y, &[1.0]).unwrap();
        let ztz = 1.0 + 4.0 + 9.0;
        let zty = 2.0 + 2.0 + 9.0;
        let beta = zty / (ztz + 1.0);
        assert!((model.coefficients[0].get(0, 0) - beta).abs() < 1e-12);
        let f = model.forecast(&[2.0]);
        assert!((f[0] - 2.0 * beta).abs() < 1e-12);
    }

    #[test]
    fn averaged_forecast_is_the_mean_of_per_alpha_forecasts() {
        let z = Matrix::from_rows(vec![
            vec![1.0, 0.5],
            vec![-1.0, 2.0],
            vec![0.3, -0.7],
            vec![2.0, 1.0],
        ]);
        let y = Matrix::from_rows(vec![vec![1.0], vec![0.0], vec![0.5], vec![2.0]]);
        let model = fit_ridge_averaged(&z, &y, &RIDGE_GRID).unwrap();
        let probe = [0.4, -1.2];
        let avg = model.forecast(&probe)[0];
        let per: f64 = (0..RIDGE_GRID.len())
            .map(|i| model.forecast_at(i, &probe)[0])
            .sum::<f64>()
            / RIDGE_GRID.len() as f64;
        assert!((avg - per).abs() < 1e-12);
    }

    #[test]
    fn small_alpha_fits_a_linear_target_better_than_large() {
        // y exactly linear in Z: the alpha=0.01 residual must not exceed the
        // alpha=100 residual, and the averaged fit stays within that bound.
        let z = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let y = Matrix::from_rows(vec![vec![2.0], vec![4.0], vec![6.0], vec![8.0]]);
        let model = fit_ridge_averaged(&z, &y, &RIDGE_GRID).unwrap();
        let resid = |idx: usize| -> f64 {
            (0..4)
                .map(|r| {
                    let f = model.forecast_at(idx, z.row(r));
                    (f[0] - y.get(r, 0)).powi(2)
                })
                .sum()
        };
        assert!(resid(0) <= resid(4));
        let avg_resid: f64 = (0..4)
            .map(|r| (model.forecast(z.row(r))[0] - y.get(r, 0)).powi(2))
            .sum();
        assert!(avg_resid <= resid(4) + 1e-12);
    }

    fn stream(seed: u64) -> TemporalTabularDataset {
        generate_synthetic_stream(&SynthConfig {
            eras: 40,
            rows_min: 25,
            rows_max: 30,
            features: 6,
            groups: 2,
            targets: 1,
            informative_per_regime: 2,
            regime_switch_eras: vec![],
            regime_style: RegimeStyle::Fresh,
            noise_sigma: 0.5,
            bin_proportions: None,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn ema_alpha_one_uses_exactly_the_cutoff_row() {
        let ds = stream(5);
        let cfg = FactorTimingConfig {
            forecaster: Forecaster::Ema { alpha: 1.0 },
            truncation: None,
            embargo: 15,
        };
        let series = run_factor_timing_backtest(&ds, &cfg, 0, 30, 34).unwrap();
        let perf = feature_performance(&ds, 0).unwrap();
        for era in 30..=34u32 {
            let cutoff_row = perf
                .eras
                .iter()
                .position(|&e| e == era - 15)
                .expect("cutoff era exists");
            let forecast: Vec<f64> = perf.values.row(cutoff_row).to_vec();
            let block = ds.block(era).unwrap();
            let expected = factor_timing_predict(&forecast, block, None).unwrap();
            assert_eq!(series.get(era).unwrap().scores, expected);
        }
    }

    #[test]
    fn backtest_is_causal() {
        let ds = stream(9);
        let cfg = FactorTimingConfig {
            forecaster: Forecaster::Ema { alpha: 0.25 },
            truncation: None,
            embargo: 5,
        };
        let base = run_factor_timing_backtest(&ds, &cfg, 0, 20, 30).unwrap();

        // Mutate every era after 30 and rerun.
        let mut mutated = ds.clone();
        for block in &mut mutated.eras {
            if block.era > 30 {
                let n = block.n_rows();
                let m = block.n_features();
                let cycled: Vec<i8> = (0..n * m)
                    .map(|i| block.feature(i / m, i % m))
                    .map(|v| if v == 2 { -2 } else { v + 1 })
                    .collect();
                let reversed_targets: Vec<f64> =
                    (0..n).rev().map(|r| block.target(r, 0)).collect();
                *block = EraBlock::new(
                    block.era,
                    block.row_ids.clone(),
                    cycled,
                    reversed_targets,
                    m,
                    block.n_targets(),
                );
            }
        }
        let after = run_factor_timing_backtest(&mutated, &cfg, 0, 20, 30).unwrap();
        assert_eq!(base.to_csv(), after.to_csv());
    }

    #[test]
    fn signature_and_rft_forecasters_run_and_are_deterministic() {
        let ds = stream(11);
        for forecaster in [
            Forecaster::Signature {
                complexity: 0.5,
                channels: 4,
                lookback: None,
                seed: 3,
            },
            Forecaster::Rft {
                complexity: 0.5,
                seed: 3,
            },
        ] {
            let cfg = FactorTimingConfig {
                forecaster,
                truncation: None,
                embargo: 5,
            };
            let a = run_factor_timing_backtest(&ds, &cfg, 0, 30, 36).unwrap();
            let b = run_factor_timing_backtest(&ds, &cfg, 0, 30, 36).unwrap();
            assert_eq!(a.to_csv(), b.to_csv());
            assert_eq!(a.eras().count(), 7);
        }
    }

    #[test]
    fn insufficient_history_is_an_error() {
        let ds = stream(2);
        let cfg = FactorTimingConfig {
            forecaster: Forecaster::Ema { alpha: 0.5 },
            truncation: None,
            embargo: 15,
        };
        assert!(matches!(
            run_factor_timing_backtest(&ds, &cfg, 0, 16, 20),
            Err(FactorTimingError::InsufficientHistory { .. })
        ));
    }
}
