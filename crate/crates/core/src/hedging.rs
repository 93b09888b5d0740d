//! Model-disagreement tail-risk signals and hedged strategies.
//!
//! The baseline signal is the rank of the mean of the members' rank-
//! normalised predictions; the tail signal is the rank of their per-row
//! standard deviation, a proxy for disagreement. Hedges mix the two: the
//! static hedge at fixed 60/40, the dynamic hedge switching the tail weight
//! between 0.6 and 0 on the sign of the trailing lagged mean score of the
//! tail strategy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TemporalTabularDataset;
use crate::metrics::{era_score, EraScore, MetricsError};
use crate::rank::centered_ranks;
use crate::series::PredictionSeries;

#[derive(Debug, Error)]
pub enum HedgeError {
    #[error("need at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("era {era} not covered by member '{model}'")]
    MissingEra { era: u32, model: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeConfig {
    /// Baseline weight of the static hedge.
    pub static_baseline_weight: f64,
    /// Tail weight when the dynamic hedge is on.
    pub dynamic_tail_weight: f64,
    /// Trailing window of tail-strategy scores.
    pub trailing_window: u32,
    /// Lag before a tail score becomes observable.
    pub trailing_lag: u32,
    /// Hedge turns on when the trailing mean is at or above this.
    pub threshold: f64,
}

impl Default for HedgeConfig {
    fn default() -> Self {
        HedgeConfig {
            static_baseline_weight: 0.6,
            dynamic_tail_weight: 0.6,
            trailing_window: 50,
            trailing_lag: 7,
            threshold: 0.0,
        }
    }
}

/// Per-row baseline (rank of mean) and tail (rank of disagreement) signals
/// for one era of aligned member predictions.
pub fn disagreement_signals(
    member_scores: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>), HedgeError> {
    let k = member_scores.len();
    if k < 2 {
        return Err(HedgeError::TooFewMembers(k));
    }
    let n = member_scores[0].len();
    if member_scores.iter().any(|m| m.len() != n) {
        return Err(HedgeError::DimensionMismatch(
            "members predict different row counts".into(),
        ));
    }
    let normalised: Vec<Vec<f64>> = member_scores
        .iter()
        .map(|m| centered_ranks(m))
        .collect();

    let mut mean = vec![0.0; n];
    for member in &normalised {
        for (acc, v) in mean.iter_mut().zip(member) {
            *acc += v / k as f64;
        }
    }
    let mut sd = vec![0.0; n];
    for member in &normalised {
        for (acc, (v, mu)) in sd.iter_mut().zip(member.iter().zip(&mean)) {
            *acc += (v - mu) * (v - mu) / k as f64;
        }
    }
    for v in &mut sd {
        *v = v.sqrt();
    }
    Ok((centered_ranks(&mean), centered_ranks(&sd)))
}

/// `0.6 * baseline + 0.4 * tail`.
pub fn static_hedge(
    baseline: &[f64],
    tail: &[f64],
    cfg: &HedgeConfig,
) -> Result<Vec<f64>, HedgeError> {
    if baseline.len() != tail.len() {
        return Err(HedgeError::DimensionMismatch(format!(
            "baseline {} rows vs tail {}",
            baseline.len(),
            tail.len()
        )));
    }
    let w = cfg.static_baseline_weight;
    Ok(baseline
        .iter()
        .zip(tail)
        .map(|(b, t)| w * b + (1.0 - w) * t)
        .collect())
}

/// Hedge-ratio decision for one era.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeDecision {
    pub hedge_ratio: f64,
    /// Trailing mean of the lagged tail scores, when the window was full.
    pub trailing_mean: Option<f64>,
    pub insufficient_history: bool,
}

/// Picks the hedge ratio from the lagged trailing tail scores and mixes
/// `(1 - h) * baseline + h * tail`. With less than a full window of history
/// the hedge stays off (fail-safe toward the baseline).
pub fn dynamic_hedge(
    baseline: &[f64],
    tail: &[f64],
    tail_history: &[EraScore],
    era: u32,
    cfg: &HedgeConfig,
) -> Result<(Vec<f64>, HedgeDecision), HedgeError> {
    if baseline.len() != tail.len() {
        return Err(HedgeError::DimensionMismatch(format!(
            "baseline {} rows vs tail {}",
            baseline.len(),
            tail.len()
        )));
    }
    // Window: eras era-lag-window+1 ..= era-lag.
    let hi = i64::from(era) - i64::from(cfg.trailing_lag);
    let lo = hi - i64::from(cfg.trailing_window) + 1;
    let in_window: Vec<f64> = tail_history
        .iter()
        .filter(|s| i64::from(s.era) >= lo && i64::from(s.era) <= hi)
        .map(|s| s.rho)
        .collect();

    let decision = if in_window.len() < cfg.trailing_window as usize {
        HedgeDecision {
            hedge_ratio: 0.0,
            trailing_mean: None,
            insufficient_history: true,
        }
    } else {
        let mean = in_window.iter().sum::<f64>() / in_window.len() as f64;
        HedgeDecision {
            hedge_ratio: if mean >= cfg.threshold {
                cfg.dynamic_tail_weight
            } else {
                0.0
            },
            trailing_mean: Some(mean),
            insufficient_history: false,
        }
    };
    let h = decision.hedge_ratio;
    let mixed = baseline
        .iter()
        .zip(tail)
        .map(|(b, t)| (1.0 - h) * b + h * t)
        .collect();
    Ok((mixed, decision))
}

/// The four hedge-family strategy series derived from member predictions.
#[derive(Debug)]
pub struct HedgeOutcome {
    pub baseline: PredictionSeries,
    pub tail_risk: PredictionSeries,
    pub static_hedged: PredictionSeries,
    pub dynamic_hedged: PredictionSeries,
    pub decisions: Vec<(u32, HedgeDecision)>,
}

/// Builds baseline/tail/static/dynamic series over `[start_era, end_era]`.
///
/// Tail scores are accumulated from the earliest era all members cover, so
/// the dynamic hedge has history before the reporting range opens. Eras
/// whose tail signal is degenerate (all members identical) contribute no
/// tail score.
pub fn run_hedging(
    members: &[PredictionSeries],
    dataset: &TemporalTabularDataset,
    scoring_target: usize,
    cfg: &HedgeConfig,
    start_era: u32,
    end_era: u32,
) -> Result<HedgeOutcome, HedgeError> {
    if members.len() < 2 {
        return Err(HedgeError::TooFewMembers(members.len()));
    }
    let mut baseline_s = PredictionSeries::new("baseline", 0, 0);
    let mut tail_s = PredictionSeries::new("tail_risk", 0, 0);
    let mut static_s = PredictionSeries::new("static_hedged", 0, 0);
    let mut dynamic_s = PredictionSeries::new("dynamic_hedged", 0, 0);
    let mut tail_scores: Vec<EraScore> = Vec::new();
    let mut decisions = Vec::new();

    let warmup_start = members
        .iter()
        .map(|m| m.eras().next())
        .collect::<Option<Vec<u32>>>()
        .and_then(|firsts| firsts.into_iter().max())
        .ok_or(HedgeError::TooFewMembers(0))?;

    for block in dataset
        .eras
        .iter()
        .filter(|b| b.era >= warmup_start && b.era <= end_era)
    {
        let era = block.era;
        let mut scores = Vec::with_capacity(members.len());
        for m in members {
            let entry = m.get(era).ok_or(HedgeError::MissingEra {
                era,
                model: m.model_id.clone(),
            })?;
            scores.push(entry.scores.clone());
        }
        let (baseline, tail) = disagreement_signals(&scores)?;
        let stat = static_hedge(&baseline, &tail, cfg)?;
        let (dynamic, decision) = dynamic_hedge(&baseline, &tail, &tail_scores, era, cfg)?;

        // Score the tail strategy for future hedge decisions; skip eras
        // where every member agreed exactly (flat tail signal).
        let targets = block.target_column(scoring_target);
        match era_score(&tail, &targets) {
            Ok(rho) => tail_scores.push(EraScore { era, rho }),
            Err(MetricsError::DegenerateInput(_)) => {}
            Err(e) => return Err(e.into()),
        }

        if era >= start_era {
            baseline_s.insert(era, block.row_ids.clone(), baseline);
            tail_s.insert(era, block.row_ids.clone(), tail);
            static_s.insert(era, block.row_ids.clone(), stat);
            dynamic_s.insert(era, block.row_ids.clone(), dynamic);
            decisions.push((era, decision));
        }
    }
    Ok(HedgeOutcome {
        baseline: baseline_s,
        tail_risk: tail_s,
        static_hedged: static_s,
        dynamic_hedged: dynamic_s,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_members_give_flat_tail() {
        let m = vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]];
        let (baseline, tail) = disagreement_signals(&m).unwrap();
        assert!(tail.iter().all(|&t| t == 0.0), "all-tied ranks centre to 0");
        assert!(baseline.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rank_reversed_members_disagree_most_at_the_extremes() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        let b: Vec<f64> = (0..7).rev().map(f64::from).collect();
        let (_, tail) = disagreement_signals(&[a, b]).unwrap();
        // Disagreement |r| is largest at both ends and smallest in the middle.
        assert_eq!(tail[3], *tail.iter().min_by(|x, y| x.partial_cmp(y).unwrap()).unwrap());
        let max = tail.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(tail[0], max);
        assert_eq!(tail[6], max);
    }

    #[test]
    fn single_member_is_rejected() {
        assert!(matches!(
            disagreement_signals(&[vec![1.0, 2.0]]),
            Err(HedgeError::TooFewMembers(1))
        ));
    }

    #[test]
    fn disagreement_is_invariant_to_monotone_member_transforms() {
        let a = vec![0.1, 0.7, 0.4, 0.9];
        let b = vec![2.0, -1.0, 0.5, 1.0];
        let (base1, tail1) = disagreement_signals(&[a.clone(), b.clone()]).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| v.exp() * 3.0).collect();
        let b2: Vec<f64> = b.iter().map(|v| v * 10.0 + 4.0).collect();
        let (base2, tail2) = disagreement_signals(&[a2, b2]).unwrap();
        assert_eq!(base1, base2);
        assert_eq!(tail1, tail2);
    }

    #[test]
    fn static_hedge_matches_the_arithmetic() {
        let cfg = HedgeConfig::default();
        let b = vec![0.4, -0.1, 0.0];
        let t = vec![-0.2, 0.3, 0.1];
        let h = static_hedge(&b, &t, &cfg).unwrap();
        for i in 0..3 {
            assert!((h[i] - (0.6 * b[i] + 0.4 * t[i])).abs() < 1e-15);
        }
        // tail == baseline collapses to the baseline.
        let same = static_hedge(&b, &b, &cfg).unwrap();
        for (x, y) in same.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        // tail == -baseline scales the baseline by 0.2.
        let neg: Vec<f64> = b.iter().map(|v| -v).collect();
        let scaled = static_hedge(&b, &neg, &cfg).unwrap();
        for (x, y) in scaled.iter().zip(&b) {
            assert!((x - 0.2 * y).abs() < 1e-15);
        }
    }

    fn history(rhos: &[f64], first_era: u32) -> Vec<EraScore> {
        rhos.iter()
            .enumerate()
            .map(|(i, &rho)| EraScore {
                era: first_era + i as u32,
                rho,
            })
            .collect()
    }

    #[test]
    fn dynamic_hedge_switches_on_the_trailing_sign() {
        let cfg = HedgeConfig::default();
        let b = vec![1.0, 0.0];
        let t = vec![0.0, 1.0];

        // 60 eras of positive tail scores before era 100.
        let pos = history(&[0.01; 60], 40);
        let (mixed, d) = dynamic_hedge(&b, &t, &pos, 100, &cfg).unwrap();
        assert_eq!(d.hedge_ratio, 0.6);
        assert!((mixed[0] - 0.4).abs() < 1e-15);
        assert!((mixed[1] - 0.6).abs() < 1e-15);

        let neg = history(&[-0.01; 60], 40);
        let (mixed, d) = dynamic_hedge(&b, &t, &neg, 100, &cfg).unwrap();
        assert_eq!(d.hedge_ratio, 0.0);
        assert_eq!(mixed, b);

        // Exactly zero trailing mean counts as on (0.25 sums exactly).
        let mut zero = history(&[0.25; 25], 44);
        zero.extend(history(&[-0.25; 25], 69));
        let (_, d) = dynamic_hedge(&b, &t, &zero, 100, &cfg).unwrap();
        assert_eq!(d.trailing_mean, Some(0.0));
        assert_eq!(d.hedge_ratio, 0.6);
    }

    #[test]
    fn dynamic_hedge_needs_a_full_window() {
        let cfg = HedgeConfig::default();
        let b = vec![1.0, 0.0];
        let t = vec![0.0, 1.0];
        let short = history(&[0.5; 10], 80);
        let (mixed, d) = dynamic_hedge(&b, &t, &short, 100, &cfg).unwrap();
        assert!(d.insufficient_history);
        assert_eq!(d.hedge_ratio, 0.0);
        assert_eq!(mixed, b);
    }

    #[test]
    fn dynamic_hedge_lag_excludes_recent_scores() {
        let cfg = HedgeConfig::default();
        let b = vec![1.0, 0.0];
        let t = vec![0.0, 1.0];
        // Window for era 100 is eras 44..=93. Scores at 94..100 are huge and
        // must be ignored.
        let mut h = history(&[-0.01; 50], 44);
        h.extend(history(&[10.0; 7], 94));
        let (_, d) = dynamic_hedge(&b, &t, &h, 100, &cfg).unwrap();
        assert_eq!(d.hedge_ratio, 0.0);
        assert!((d.trailing_mean.unwrap() + 0.01).abs() < 1e-12);
    }

    #[test]
    fn hedge_outputs_stay_in_the_convex_hull() {
        let cfg = HedgeConfig::default();
        let b = vec![0.3, -0.5, 0.2, 0.0];
        let t = vec![-0.1, 0.4, 0.2, -0.3];
        let s = static_hedge(&b, &t, &cfg).unwrap();
        let full = history(&[0.01; 60], 1);
        let (d, _) = dynamic_hedge(&b, &t, &full, 70, &cfg).unwrap();
        for i in 0..b.len() {
            let lo = b[i].min(t[i]) - 1e-15;
            let hi = b[i].max(t[i]) + 1e-15;
            assert!(s[i] >= lo && s[i] <= hi);
            assert!(d[i] >= lo && d[i] <= hi);
        }
    }

    #[test]
    fn switch_era_is_exactly_where_the_lagged_mean_crosses_zero() {
        let cfg = HedgeConfig::default();
        let b = vec![1.0, 0.0];
        let t = vec![0.0, 1.0];
        // Eras 1..=80 at +0.01, eras 81..=200 at -0.03. At era 100 the
        // window [44, 93] holds 37 positive and 13 negative scores, so the
        // mean (0.37 - 0.39)/50 first dips below zero; at era 99 it is still
        // (0.38 - 0.36)/50 > 0.
        let mut h = history(&[0.01; 80], 1);
        h.extend(history(&[-0.03; 120], 81));
        let mut switch = None;
        for era in 60..=150u32 {
            let (_, d) = dynamic_hedge(&b, &t, &h, era, &cfg).unwrap();
            if !d.insufficient_history && d.hedge_ratio == 0.0 && switch.is_none() {
                switch = Some(era);
            }
        }
        assert_eq!(switch, Some(100));
    }
}
