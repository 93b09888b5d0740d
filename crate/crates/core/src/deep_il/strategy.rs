//! Recipe generators for the shipped layer-1 ensemble strategies.
//!
//! Each generator expands a base hyperparameter set into the member recipes
//! of one strategy. Budgets and learning rates stay tied through the 50/B
//! rule, so varying the budget is the same as varying model complexity.

use crate::dataset::{FeatureSampleSpec, SamplingScheme, TemporalTabularDataset};
use crate::gbdt::{ansatz_learning_rate, GbdtHyperparams};
use crate::rng::Rng;

use super::ModelRecipe;

/// Lookback ratios of the training-size ensemble, largest first.
pub const TRAINING_SIZE_RATIOS: [f64; 5] = [1.0, 0.875, 0.75, 0.625, 0.5];

fn member_seed(base_seed: u64, index: u64) -> u64 {
    Rng::from_seed(base_seed).derive("recipe", index).next_u64()
}

fn with_budget(base: &GbdtHyperparams, rounds: u32, seed: u64) -> GbdtHyperparams {
    GbdtHyperparams {
        boosting_rounds: rounds,
        learning_rate: ansatz_learning_rate(rounds),
        seed,
        ..base.clone()
    }
}

/// Five members over shrinking lookbacks; budgets scale with the lookback
/// ratio and rates follow 50/B.
pub fn training_size_recipes(
    base: &GbdtHyperparams,
    max_lookback: u32,
    row_sampling: SamplingScheme,
    target_index: usize,
) -> Vec<ModelRecipe> {
    TRAINING_SIZE_RATIOS
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let rounds = ((f64::from(base.boosting_rounds) * ratio).round() as u32).max(1);
            let lookback = ((f64::from(max_lookback) * ratio).round() as u32).max(1);
            ModelRecipe {
                id: format!("ts_r{ratio}"),
                hyperparams: with_budget(base, rounds, member_seed(base.seed, i as u64)),
                row_sampling,
                feature_sample: FeatureSampleSpec::AllFeatures,
                target_index,
                lookback_override: Some(lookback),
            }
        })
        .collect()
}

/// Budget ladder `B/4, B/2, B, 2B, 4B` around the base budget.
pub fn learning_rate_budgets(base_rounds: u32) -> [u32; 5] {
    let b = base_rounds;
    [
        (b / 4).max(1),
        (b / 2).max(1),
        b,
        b.saturating_mul(2),
        b.saturating_mul(4),
    ]
}

/// Five members over the budget ladder, rates tied by 50/B.
pub fn learning_rate_recipes(
    base: &GbdtHyperparams,
    row_sampling: SamplingScheme,
    target_index: usize,
) -> Vec<ModelRecipe> {
    learning_rate_budgets(base.boosting_rounds)
        .iter()
        .enumerate()
        .map(|(i, &rounds)| ModelRecipe {
            id: format!("lr_b{rounds}"),
            hyperparams: with_budget(base, rounds, member_seed(base.seed, i as u64)),
            row_sampling,
            feature_sample: FeatureSampleSpec::AllFeatures,
            target_index,
            lookback_override: None,
        })
        .collect()
}

/// The learning-rate ladder crossed with a list of targets
/// (`5 * targets.len()` members).
pub fn target_recipes(
    base: &GbdtHyperparams,
    row_sampling: SamplingScheme,
    targets: &[usize],
) -> Vec<ModelRecipe> {
    let budgets = learning_rate_budgets(base.boosting_rounds);
    let mut out = Vec::with_capacity(budgets.len() * targets.len());
    for (ti, &target_index) in targets.iter().enumerate() {
        for (bi, &rounds) in budgets.iter().enumerate() {
            let index = (ti * budgets.len() + bi) as u64;
            out.push(ModelRecipe {
                id: format!("t{target_index}_b{rounds}"),
                hyperparams: with_budget(base, rounds, member_seed(base.seed, index)),
                row_sampling,
                feature_sample: FeatureSampleSpec::AllFeatures,
                target_index,
                lookback_override: None,
            });
        }
    }
    out
}

/// One member per feature group, each trained with that group removed.
pub fn jackknife_recipes(
    base: &GbdtHyperparams,
    row_sampling: SamplingScheme,
    target_index: usize,
    dataset: &TemporalTabularDataset,
) -> Vec<ModelRecipe> {
    dataset
        .feature_groups
        .keys()
        .enumerate()
        .map(|(i, group)| ModelRecipe {
            id: format!("jk_{group}"),
            hyperparams: GbdtHyperparams {
                seed: member_seed(base.seed, i as u64),
                ..base.clone()
            },
            row_sampling,
            feature_sample: FeatureSampleSpec::JackknifeDrop {
                group: group.clone(),
            },
            target_index,
            lookback_override: None,
        })
        .collect()
}

/// `n_models` members, each on an independent random feature subset.
pub fn random_feature_recipes(
    base: &GbdtHyperparams,
    row_sampling: SamplingScheme,
    target_index: usize,
    n_models: usize,
    fraction: f64,
) -> Vec<ModelRecipe> {
    (0..n_models)
        .map(|i| ModelRecipe {
            id: format!("rf_{i}"),
            hyperparams: GbdtHyperparams {
                seed: member_seed(base.seed, i as u64),
                ..base.clone()
            },
            row_sampling,
            feature_sample: FeatureSampleSpec::RandomFraction {
                fraction,
                seed: member_seed(base.seed ^ 0x5eed, i as u64),
            },
            target_index,
            lookback_override: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_stream, RegimeStyle, RowSampling, SynthConfig};

    fn base() -> GbdtHyperparams {
        GbdtHyperparams::ansatz(5000, 42)
    }

    fn s1() -> SamplingScheme {
        SamplingScheme::all()
    }

    #[test]
    fn training_size_members_scale_lookbacks_and_budgets() {
        let recipes = training_size_recipes(&base(), 800, s1(), 0);
        let lookbacks: Vec<u32> = recipes
            .iter()
            .map(|r| r.lookback_override.unwrap())
            .collect();
        assert_eq!(lookbacks, vec![800, 700, 600, 500, 400]);
        let budgets: Vec<u32> = recipes
            .iter()
            .map(|r| r.hyperparams.boosting_rounds)
            .collect();
        assert_eq!(budgets, vec![5000, 4375, 3750, 3125, 2500]);
        for r in &recipes {
            let expected = ansatz_learning_rate(r.hyperparams.boosting_rounds);
            assert_eq!(r.hyperparams.learning_rate, expected);
        }
    }

    #[test]
    fn learning_rate_ladder_spans_quarter_to_quadruple() {
        let recipes = learning_rate_recipes(&base(), s1(), 0);
        let budgets: Vec<u32> = recipes
            .iter()
            .map(|r| r.hyperparams.boosting_rounds)
            .collect();
        assert_eq!(budgets, vec![1250, 2500, 5000, 10000, 20000]);
        for r in &recipes {
            assert!(
                (f64::from(r.hyperparams.boosting_rounds) * r.hyperparams.learning_rate - 50.0)
                    .abs()
                    < 1e-9
            );
        }
    }

    #[test]
    fn target_cross_gives_twenty_five_members() {
        let recipes = target_recipes(&base(), s1(), &[0, 1, 2, 3, 4]);
        assert_eq!(recipes.len(), 25);
        let mut ids: Vec<&str> = recipes.iter().map(|r| r.id.as_str()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 25, "member ids must be distinct");
    }

    #[test]
    fn jackknife_covers_every_group_once() {
        let ds = generate_synthetic_stream(&SynthConfig {
            eras: 3,
            rows_min: 10,
            rows_max: 10,
            features: 9,
            groups: 3,
            targets: 1,
            informative_per_regime: 2,
            regime_switch_eras: vec![],
            regime_style: RegimeStyle::Fresh,
            noise_sigma: 0.1,
            bin_proportions: None,
            seed: 1,
        })
        .unwrap();
        let recipes = jackknife_recipes(&base(), s1(), 0, &ds);
        assert_eq!(recipes.len(), 3);
        for (r, group) in recipes.iter().zip(ds.feature_groups.keys()) {
            assert_eq!(
                r.feature_sample,
                FeatureSampleSpec::JackknifeDrop {
                    group: group.clone()
                }
            );
        }
    }

    #[test]
    fn random_feature_members_use_distinct_seeds() {
        let recipes = random_feature_recipes(&base(), s1(), 0, 10, 0.5);
        assert_eq!(recipes.len(), 10);
        let mut seeds: Vec<u64> = recipes
            .iter()
            .map(|r| match r.feature_sample {
                FeatureSampleSpec::RandomFraction { seed, .. } => seed,
                _ => panic!("expected random fraction"),
            })
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10);
    }

    #[test]
    fn sampling_scheme_passes_through() {
        let scheme = SamplingScheme {
            kind: RowSampling::DropMedian,
            era_stride: 4,
            era_offset: 1,
        };
        for r in learning_rate_recipes(&base(), scheme, 0) {
            assert_eq!(r.row_sampling, scheme);
        }
    }
}
