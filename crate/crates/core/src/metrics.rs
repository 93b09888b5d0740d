//! Per-era correlation score and aggregate portfolio metrics.
//!
//! The era score ranks predictions to percentiles, maps them through the
//! inverse normal CDF, raises both sides to the 3/2 power (sign preserved)
//! and takes the Pearson correlation against the transformed targets. The
//! 3/2 power emphasises the tails of the ranking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rank::percentile_ranks;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("need at least 2 eras, got {0}")]
    TooFewEras(usize),
}

/// Score of one era.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EraScore {
    pub era: u32,
    pub rho: f64,
}

/// Aggregate metrics over a score sequence. `sharpe` is undefined when the
/// score standard deviation is zero, `calmar` when the drawdown is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub scores: Vec<EraScore>,
    pub mean_corr: f64,
    pub sharpe: Option<f64>,
    pub calmar: Option<f64>,
    pub max_drawdown: f64,
}

/// Inverse standard normal CDF, Acklam's rational approximation
/// (absolute error below 1.5e-7 on (0, 1)).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inverse_normal_cdf domain is (0,1), got {p}");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| -> f64 {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

fn signed_pow_3_2(v: f64) -> f64 {
    v.signum() * v.abs().powf(1.5)
}

/// Pearson correlation. Errors when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "zero variance in correlation input".into(),
        ));
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// The per-era correlation score of predictions against centred targets.
/// Predictions need not be ranked; only their order matters.
pub fn era_score(predictions: &[f64], targets: &[f64]) -> Result<f64, MetricsError> {
    if predictions.len() != targets.len() {
        return Err(MetricsError::DegenerateInput(format!(
            "length mismatch: {} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.len() < 3 {
        return Err(MetricsError::DegenerateInput(format!(
            "need at least 3 rows, got {}",
            predictions.len()
        )));
    }
    let gauss: Vec<f64> = percentile_ranks(predictions)
        .into_iter()
        .map(inverse_normal_cdf)
        .map(signed_pow_3_2)
        .collect();
    let t15: Vec<f64> = targets.iter().copied().map(signed_pow_3_2).collect();
    pearson(&gauss, &t15)
}

/// Peak-to-trough loss of the cumulative score, with the high watermark
/// initialised at zero (the portfolio starts flat).
pub fn max_drawdown(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty(), "max_drawdown of empty sequence");
    let mut cum = 0.0;
    let mut peak = 0.0f64;
    let mut dd = 0.0f64;
    for s in scores {
        cum += s;
        peak = peak.max(cum);
        dd = dd.max(peak - cum);
    }
    dd
}

/// Builds the aggregate report: mean, Sharpe (population std), max drawdown
/// and Calmar.
pub fn report(scores: &[EraScore]) -> Result<BacktestReport, MetricsError> {
    if scores.len() < 2 {
        return Err(MetricsError::TooFewEras(scores.len()));
    }
    let rhos: Vec<f64> = scores.iter().map(|s| s.rho).collect();
    let n = rhos.len() as f64;
    let mean = rhos.iter().sum::<f64>() / n;
    let var = rhos.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let dd = max_drawdown(&rhos);
    Ok(BacktestReport {
        scores: scores.to_vec(),
        mean_corr: mean,
        sharpe: (std > 0.0).then(|| mean / std),
        calmar: (dd > 0.0).then(|| mean / dd),
        max_drawdown: dd,
    })
}
