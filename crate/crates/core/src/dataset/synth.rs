//! Synthetic regime-switching stream generator.
//!
//! Features are iid uniform over the five bins. A latent per-row score
//! `s = sum_j w_j * x_j + noise` drives the targets, where `w` is sparse and
//! regime-dependent: each regime either redraws its informative support
//! (`fresh`) or flips the signs of the first regime's weights (`flip`).
//! Targets are per-era quantile bins of the latent score with a
//! Gaussian-like shape (5/20/50/20/5 percent by default).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DatasetError, EraBlock, TemporalTabularDataset, FEATURE_BINS, TARGET_BINS};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegimeStyle {
    /// Each regime draws a fresh sparse weight vector.
    #[default]
    Fresh,
    /// Regime r uses the first regime's weights times (-1)^r.
    Flip,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub eras: u32,
    pub rows_min: usize,
    pub rows_max: usize,
    pub features: usize,
    pub groups: usize,
    #[serde(default = "default_targets")]
    pub targets: usize,
    pub informative_per_regime: usize,
    #[serde(default)]
    pub regime_switch_eras: Vec<u32>,
    #[serde(default)]
    pub regime_style: RegimeStyle,
    pub noise_sigma: f64,
    /// Target bin proportions, low to high. Defaults to (0.05, 0.2, 0.5, 0.2, 0.05).
    #[serde(default)]
    pub bin_proportions: Option<[f64; 5]>,
    pub seed: u64,
}

fn default_targets() -> usize {
    1
}

pub const DEFAULT_BIN_PROPORTIONS: [f64; 5] = [0.05, 0.2, 0.5, 0.2, 0.05];

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |msg: String| Err(DatasetError::InvalidConfig(msg));
        if self.eras == 0 {
            return fail("eras must be >= 1".into());
        }
        if self.rows_min == 0 || self.rows_min > self.rows_max {
            return fail(format!(
                "rows range [{}, {}] invalid",
                self.rows_min, self.rows_max
            ));
        }
        if self.features == 0 {
            return fail("features must be >= 1".into());
        }
        if self.groups == 0 || self.groups > self.features {
            return fail(format!(
                "groups {} must be in 1..=features ({})",
                self.groups, self.features
            ));
        }
        if self.targets == 0 {
            return fail("targets must be >= 1".into());
        }
        if self.informative_per_regime == 0 || self.informative_per_regime > self.features {
            return fail(format!(
                "informative_per_regime {} must be in 1..=features ({})",
                self.informative_per_regime, self.features
            ));
        }
        let mut prev = 1u32;
        for &e in &self.regime_switch_eras {
            if e <= prev || e > self.eras {
                return fail(format!("regime switch era {e} must be increasing and in 2..=eras"));
            }
            prev = e;
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return fail(format!("noise_sigma {} invalid", self.noise_sigma));
        }
        if let Some(p) = self.bin_proportions {
            if p.iter().any(|&x| x <= 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return fail("bin_proportions must be positive and sum to 1".into());
            }
        }
        Ok(())
    }

    fn regime_of(&self, era: u32) -> usize {
        self.regime_switch_eras.iter().filter(|&&s| era >= s).count()
    }
}

/// Deterministic per-era bin counts: cumulative proportions rounded to rows.
pub fn bin_counts(n: usize, proportions: &[f64; 5]) -> [usize; 5] {
    let mut counts = [0usize; 5];
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (i, p) in proportions.iter().enumerate() {
        cum += p;
        let upto = ((n as f64) * cum).round().min(n as f64) as usize;
        counts[i] = upto - prev;
        prev = upto;
    }
    counts[4] += n - prev;
    counts
}

/// Bins a latent score vector into the five centred target bins by rank.
/// Ties are broken by row index so the cut is deterministic.
fn bin_latent(scores: &[f64], proportions: &[f64; 5]) -> Vec<f64> {
    let n = scores.len();
    let counts = bin_counts(n, proportions);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("latent score NaN")
            .then(a.cmp(&b))
    });
    let mut out = vec![0.0; n];
    let mut pos = 0;
    for (bin, &count) in counts.iter().enumerate() {
        for &row in &order[pos..pos + count] {
            out[row] = TARGET_BINS[bin];
        }
        pos += count;
    }
    out
}

struct Regime {
    weights: Vec<f64>,
}

fn regime_weights(cfg: &SynthConfig, root: &Rng, regime: usize) -> Regime {
    let base_index = match cfg.regime_style {
        RegimeStyle::Fresh => regime,
        RegimeStyle::Flip => 0,
    };
    let mut rng = root.derive("regime", base_index as u64);
    let support = rng.sample_without_replacement(cfg.features, cfg.informative_per_regime);
    let mut weights = vec![0.0; cfg.features];
    for &j in &support {
        weights[j] = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
    }
    if matches!(cfg.regime_style, RegimeStyle::Flip) && regime % 2 == 1 {
        for w in &mut weights {
            *w = -*w;
        }
    }
    Regime { weights }
}

/// Generates a dataset from the config; fully deterministic per seed.
pub fn generate_synthetic_stream(
    cfg: &SynthConfig,
) -> Result<TemporalTabularDataset, DatasetError> {
    cfg.validate()?;
    let root = Rng::from_seed(cfg.seed);
    let proportions = cfg.bin_proportions.unwrap_or(DEFAULT_BIN_PROPORTIONS);

    let n_regimes = cfg.regime_switch_eras.len() + 1;
    let regimes: Vec<Regime> = (0..n_regimes)
        .map(|r| regime_weights(cfg, &root, r))
        .collect();

    let feature_names: Vec<String> = (0..cfg.features).map(|j| format!("f{j}")).collect();
    let target_names: Vec<String> = (0..cfg.targets).map(|k| format!("target{k}")).collect();

    // Round-robin group assignment so every feature is covered.
    let mut feature_groups: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for j in 0..cfg.features {
        feature_groups
            .entry(format!("g{}", j % cfg.groups))
            .or_default()
            .insert(j);
    }

    let mut eras = Vec::with_capacity(cfg.eras as usize);
    for era in 1..=cfg.eras {
        let mut era_rng = root.derive("era", u64::from(era));
        let span = cfg.rows_max - cfg.rows_min;
        let n = cfg.rows_min
            + if span == 0 {
                0
            } else {
                era_rng.next_below(span as u64 + 1) as usize
            };
        let mut features = Vec::with_capacity(n * cfg.features);
        for _ in 0..n * cfg.features {
            features.push(FEATURE_BINS[era_rng.next_below(5) as usize]);
        }

        let regime = &regimes[cfg.regime_of(era)];
        let latent: Vec<f64> = (0..n)
            .map(|r| {
                let row = &features[r * cfg.features..(r + 1) * cfg.features];
                let signal: f64 = row
                    .iter()
                    .zip(&regime.weights)
                    .map(|(&x, &w)| f64::from(x) * w)
                    .sum();
                signal + cfg.noise_sigma * era_rng.next_normal()
            })
            .collect();

        // Target 0 bins the latent score directly; later targets add scaled
        // per-target noise so multi-target strategies have distinct signals.
        let latent_sd = {
            let mean = latent.iter().sum::<f64>() / n as f64;
            let var = latent.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
            var.sqrt().max(1e-12)
        };
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cfg.targets);
        columns.push(bin_latent(&latent, &proportions));
        for t in 1..cfg.targets {
            let mut aux_rng = era_rng.derive("aux-target", t as u64);
            let perturbed: Vec<f64> = latent
                .iter()
                .map(|s| s + 0.35 * t as f64 * latent_sd * aux_rng.next_normal())
                .collect();
            columns.push(bin_latent(&perturbed, &proportions));
        }
        let mut targets = Vec::with_capacity(n * cfg.targets);
        for r in 0..n {
            for col in &columns {
                targets.push(col[r]);
            }
        }

        let row_ids = (0..n).map(|r| format!("e{era}_r{r}")).collect();
        eras.push(EraBlock::new(
            era,
            row_ids,
            features,
            targets,
            cfg.features,
            cfg.targets,
        ));
    }

    let dataset = TemporalTabularDataset {
        eras,
        feature_names,
        target_names,
        feature_groups,
    };
    dataset.validate()?;
    Ok(dataset)
}
