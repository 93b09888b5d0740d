//! Deep incremental-learning orchestrator.
//!
//! A plan stacks one or more ensemble layers of boosted-tree recipes on a
//! temporal tabular stream. Each layer trains on a trailing lookback window
//! that ends one embargo before the retrain era, is refreshed on a fixed
//! retrain period, and serves predictions for the eras up to the next
//! retrain. Later layers may consume earlier layers' rank-normalised
//! predictions as extra input columns. Layer-2 combiners (equal weight /
//! non-negative ridge) merge the final layer's members per era.
//!
//! Everything is strictly causal: a model retrained at era r sees targets of
//! eras `<= r - embargo` only, and a combiner scoring era t trains on member
//! predictions from eras `<= t - embargo - 1`.

mod combine;
mod strategy;

pub use combine::{combine, kkt_residual, nonneg_ridge, CombineOutcome, Combiner, CombinerKind};
pub use strategy::{
    jackknife_recipes, learning_rate_recipes, random_feature_recipes, target_recipes,
    training_size_recipes,
};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    resolve_feature_sample, sampled_row_indices, DatasetError, EraBlock, FeatureSampleSpec,
    SamplingScheme, TemporalTabularDataset,
};
use crate::gbdt::{fit_with_features, GbdtError, GbdtHyperparams, GbdtModel};
use crate::linalg::Matrix;
use crate::rank::percentile_ranks;
use crate::series::PredictionSeries;

#[derive(Debug, Error)]
pub enum DeepIlError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("training as of era {as_of_era} needs data back to era {needed_from}, dataset starts at {first_era}")]
    InsufficientHistory {
        as_of_era: u32,
        needed_from: i64,
        first_era: u32,
    },
    #[error("era {era} not covered by series '{model}'")]
    WindowNotCovered { era: u32, model: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LayerInput {
    #[default]
    RawFeatures,
    PriorPredictions,
    Both,
}

/// One trainable ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecipe {
    pub id: String,
    pub hyperparams: GbdtHyperparams,
    pub row_sampling: SamplingScheme,
    pub feature_sample: FeatureSampleSpec,
    pub target_index: usize,
    /// Lookback in eras; defaults to the layer lookback.
    #[serde(default)]
    pub lookback_override: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Training window length in eras.
    pub lookback: u32,
    pub recipes: Vec<ModelRecipe>,
    #[serde(default)]
    pub input: LayerInput,
    pub retrain_period: u32,
    pub embargo: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepIlPlan {
    pub layers: Vec<LayerSpec>,
    pub combiners: Vec<Combiner>,
    pub scoring_target: usize,
}

impl DeepIlPlan {
    pub fn validate(&self, dataset: &TemporalTabularDataset) -> Result<(), DeepIlError> {
        if self.layers.is_empty() {
            return Err(DeepIlError::InvalidPlan("plan has no layers".into()));
        }
        if self.scoring_target >= dataset.n_targets() {
            return Err(DeepIlError::InvalidPlan(format!(
                "scoring target {} out of range ({} targets)",
                self.scoring_target,
                dataset.n_targets()
            )));
        }
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.lookback == 0 || layer.retrain_period == 0 {
                return Err(DeepIlError::InvalidPlan(format!(
                    "layer {}: lookback and retrain_period must be >= 1",
                    li + 1
                )));
            }
            if layer.recipes.is_empty() {
                return Err(DeepIlError::InvalidPlan(format!(
                    "layer {} has no recipes",
                    li + 1
                )));
            }
            if li == 0 && layer.input != LayerInput::RawFeatures {
                return Err(DeepIlError::InvalidPlan(
                    "layer 1 input must be raw_features".into(),
                ));
            }
            for recipe in &layer.recipes {
                recipe.hyperparams.validate()?;
                recipe.row_sampling.validate()?;
                if recipe.target_index >= dataset.n_targets() {
                    return Err(DeepIlError::InvalidPlan(format!(
                        "recipe '{}' targets column {} of {}",
                        recipe.id,
                        recipe.target_index,
                        dataset.n_targets()
                    )));
                }
                if layer.input == LayerInput::PriorPredictions
                    && recipe.feature_sample != FeatureSampleSpec::AllFeatures
                {
                    return Err(DeepIlError::InvalidPlan(format!(
                        "recipe '{}': feature sampling applies to raw features only",
                        recipe.id
                    )));
                }
                // Fail fast on unknown groups.
                resolve_feature_sample(&recipe.feature_sample, dataset)?;
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.combiners {
            c.validate()?;
            if !seen.insert(c.strategy_name()) {
                return Err(DeepIlError::InvalidPlan(format!(
                    "duplicate combiner '{}'",
                    c.strategy_name()
                )));
            }
        }
        Ok(())
    }
}

/// Era interval `(lo, hi)` (inclusive) of layer `l` (1-based) in the minimal
/// stacked arrangement: consecutive layers are separated by exactly the
/// embargo.
pub fn layer_window(l: usize, lookbacks: &[u32], embargo: u32) -> (u32, u32) {
    assert!(l >= 1 && l <= lookbacks.len(), "layer index out of range");
    let offset: u32 = lookbacks[..l - 1].iter().map(|&a| a + embargo).sum();
    (offset + 1, offset + lookbacks[l - 1])
}

/// Retrain eras `start, start + period, ...` up to and including `end`.
/// A model trained at era r serves predictions for `(r, min(r + period, end)]`.
pub fn retrain_schedule(start_era: u32, end_era: u32, period: u32) -> Vec<u32> {
    assert!(period >= 1, "retrain period must be >= 1");
    let mut out = Vec::new();
    let mut era = start_era;
    while era <= end_era {
        out.push(era);
        era += period;
    }
    out
}

/// A member model trained at one retrain era.
#[derive(Debug, Clone)]
pub struct TrainedMember {
    pub recipe_id: String,
    pub target_index: usize,
    pub model: GbdtModel,
}

/// Input matrix for one era under a layer's input mode: raw feature columns
/// (as f64) and/or one rank-normalised column per prior-layer member.
fn assemble_input(
    block: &EraBlock,
    input: LayerInput,
    prior: Option<&[PredictionSeries]>,
    rows: &[usize],
) -> Result<Matrix, DeepIlError> {
    let m = block.n_features();
    let prior_cols: Vec<Vec<f64>> = match input {
        LayerInput::RawFeatures => Vec::new(),
        LayerInput::PriorPredictions | LayerInput::Both => {
            let members = prior.ok_or_else(|| {
                DeepIlError::InvalidPlan("layer wants prior predictions but none exist".into())
            })?;
            members
                .iter()
                .map(|s| {
                    let entry = s.get(block.era).ok_or(DeepIlError::WindowNotCovered {
                        era: block.era,
                        model: s.model_id.clone(),
                    })?;
                    if entry.scores.len() != block.n_rows() {
                        return Err(DeepIlError::WindowNotCovered {
                            era: block.era,
                            model: format!("{} (row count changed)", s.model_id),
                        });
                    }
                    Ok(percentile_ranks(&entry.scores))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let raw = input != LayerInput::PriorPredictions;
    let cols = if raw { m } else { 0 } + prior_cols.len();
    let mut out = Matrix::zeros(rows.len(), cols);
    for (out_r, &r) in rows.iter().enumerate() {
        let mut c = 0;
        if raw {
            for j in 0..m {
                out.set(out_r, c, f64::from(block.feature(r, j)));
                c += 1;
            }
        }
        for col in &prior_cols {
            out.set(out_r, c, col[r]);
            c += 1;
        }
    }
    Ok(out)
}

/// Feature indices a recipe may split on, in assembled-matrix coordinates.
fn allowed_columns(
    recipe: &ModelRecipe,
    input: LayerInput,
    dataset: &TemporalTabularDataset,
    n_prior: usize,
) -> Result<Vec<usize>, DeepIlError> {
    let m = dataset.n_features();
    Ok(match input {
        LayerInput::RawFeatures => resolve_feature_sample(&recipe.feature_sample, dataset)?,
        LayerInput::PriorPredictions => (0..n_prior).collect(),
        LayerInput::Both => {
            let mut cols = resolve_feature_sample(&recipe.feature_sample, dataset)?;
            cols.extend(m..m + n_prior);
            cols
        }
    })
}

/// Trains every recipe of a layer as of one retrain era. The returned order
/// matches the recipe order regardless of parallel execution.
pub fn train_layer(
    dataset: &TemporalTabularDataset,
    spec: &LayerSpec,
    prior: Option<&[PredictionSeries]>,
    as_of_era: u32,
) -> Result<Vec<TrainedMember>, DeepIlError> {
    let first_era = dataset.first_era();
    spec.recipes
        .par_iter()
        .map(|recipe| {
            let lookback = recipe.lookback_override.unwrap_or(spec.lookback);
            let lo_excl = i64::from(as_of_era) - i64::from(spec.embargo) - i64::from(lookback);
            let hi = i64::from(as_of_era) - i64::from(spec.embargo);
            if lo_excl < i64::from(first_era) - 1 {
                return Err(DeepIlError::InsufficientHistory {
                    as_of_era,
                    needed_from: lo_excl + 1,
                    first_era,
                });
            }
            let available: Vec<u32> = dataset
                .era_indices()
                .into_iter()
                .filter(|&e| i64::from(e) > lo_excl && i64::from(e) <= hi)
                .collect();
            let selected = crate::dataset::select_training_eras(
                &available,
                recipe.row_sampling.era_stride,
                recipe.row_sampling.era_offset,
            );
            if selected.is_empty() {
                return Err(DeepIlError::InsufficientHistory {
                    as_of_era,
                    needed_from: lo_excl + 1,
                    first_era,
                });
            }

            let n_prior = prior.map_or(0, <[PredictionSeries]>::len);
            let mut x_parts: Vec<Matrix> = Vec::with_capacity(selected.len());
            let mut y: Vec<f64> = Vec::new();
            for &era in &selected {
                let block = dataset.block(era).expect("selected era exists");
                let kept = sampled_row_indices(block, &recipe.row_sampling, recipe.target_index)?;
                x_parts.push(assemble_input(block, spec.input, prior, &kept)?);
                y.extend(kept.iter().map(|&r| block.target(r, recipe.target_index)));
            }
            let cols = x_parts[0].cols();
            let mut data = Vec::with_capacity(y.len() * cols);
            for part in &x_parts {
                data.extend_from_slice(part.data());
            }
            let x = Matrix::from_vec(y.len(), cols, data);

            let allowed = allowed_columns(recipe, spec.input, dataset, n_prior)?;
            let model = fit_with_features(&x, &y, &recipe.hyperparams, &allowed)?;
            Ok(TrainedMember {
                recipe_id: recipe.id.clone(),
                target_index: recipe.target_index,
                model,
            })
        })
        .collect()
}

/// One stored model per (layer, retrain era, recipe).
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub layer: u32,
    pub retrain_era: u32,
    pub recipe_id: String,
    pub model: GbdtModel,
}

#[derive(Debug)]
pub struct DeepIlOutcome {
    /// Final-layer member predictions, one series per recipe.
    pub members: Vec<PredictionSeries>,
    /// Combined strategy outputs keyed by strategy name.
    pub strategies: BTreeMap<String, PredictionSeries>,
    /// Every model trained along the way.
    pub models: Vec<StoredModel>,
    /// First era with combined strategy output.
    pub first_combined_era: u32,
    /// Eras where the ridge combiner fell back to equal weights.
    pub ridge_fallback_eras: Vec<u32>,
}

/// Runs the full plan. `start_era` is the first retrain era of layer 1;
/// combined outputs begin once every combiner window is covered and run
/// through `end_era`.
pub fn run_deep_il(
    dataset: &TemporalTabularDataset,
    plan: &DeepIlPlan,
    start_era: u32,
    end_era: u32,
) -> Result<DeepIlOutcome, DeepIlError> {
    plan.validate(dataset)?;
    if start_era > end_era {
        return Err(DeepIlError::InvalidPlan(format!(
            "start era {start_era} after end era {end_era}"
        )));
    }

    let mut models: Vec<StoredModel> = Vec::new();
    let mut prior: Option<Vec<PredictionSeries>> = None;
    let mut first_retrain = start_era;

    for (li, layer) in plan.layers.iter().enumerate() {
        let layer_no = (li + 1) as u32;
        if li > 0 {
            first_retrain += layer.lookback + layer.embargo;
        }
        let schedule = retrain_schedule(first_retrain, end_era, layer.retrain_period);
        let mut member_series: Vec<PredictionSeries> = layer
            .recipes
            .iter()
            .map(|r| PredictionSeries::new(r.id.clone(), layer_no, first_retrain + 1))
            .collect();

        for &retrain_era in &schedule {
            let trained = train_layer(dataset, layer, prior.as_deref(), retrain_era)?;
            let serve_hi = retrain_era
                .saturating_add(layer.retrain_period)
                .min(end_era);
            for block in dataset
                .eras
                .iter()
                .filter(|b| b.era > retrain_era && b.era <= serve_hi)
            {
                let all_rows: Vec<usize> = (0..block.n_rows()).collect();
                let x = assemble_input(block, layer.input, prior.as_deref(), &all_rows)?;
                for (series, member) in member_series.iter_mut().zip(&trained) {
                    let scores = crate::gbdt::predict(&member.model, &x)?;
                    series.insert(block.era, block.row_ids.clone(), scores);
                }
            }
            for member in trained {
                models.push(StoredModel {
                    layer: layer_no,
                    retrain_era,
                    recipe_id: member.recipe_id,
                    model: member.model,
                });
            }
        }
        prior = Some(member_series);
    }

    let members = prior.expect("at least one layer");
    let warmup = plan
        .combiners
        .iter()
        .map(|c| c.training_window + c.embargo)
        .max()
        .unwrap_or(0);
    let first_combined = first_retrain + warmup + 1;

    let mut strategies = BTreeMap::new();
    let mut ridge_fallback_eras = Vec::new();
    for combiner in &plan.combiners {
        let mut series = PredictionSeries::new(combiner.strategy_name(), 0, first_combined);
        for block in dataset
            .eras
            .iter()
            .filter(|b| b.era >= first_combined && b.era <= end_era)
        {
            let out = combine(&members, combiner, block.era, dataset, plan.scoring_target)?;
            if out.ridge_fallback {
                ridge_fallback_eras.push(block.era);
            }
            series.insert(block.era, block.row_ids.clone(), out.scores);
        }
        strategies.insert(combiner.strategy_name().to_string(), series);
    }

    Ok(DeepIlOutcome {
        members,
        strategies,
        models,
        first_combined_era: first_combined,
        ridge_fallback_eras,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_stream, RegimeStyle, SynthConfig};

    fn stream(seed: u64, eras: u32) -> TemporalTabularDataset {
        generate_synthetic_stream(&SynthConfig {
            eras,
            rows_min: 25,
            rows_max: 30,
            features: 6,
            groups: 2,
            targets: 2,
            informative_per_regime: 2,
            regime_switch_eras: vec![],
            regime_style: RegimeStyle::Fresh,
            noise_sigma: 0.5,
            bin_proportions: None,
            seed,
        })
        .unwrap()
    }

    fn recipe(id: &str, rounds: u32, seed: u64) -> ModelRecipe {
        ModelRecipe {
            id: id.into(),
            hyperparams: GbdtHyperparams {
                boosting_rounds: rounds,
                learning_rate: 0.2,
                max_depth: 3,
                min_samples_leaf: 5,
                row_subsample: 1.0,
                feature_subsample_per_tree: 1.0,
                seed,
            },
            row_sampling: SamplingScheme::all(),
            feature_sample: FeatureSampleSpec::AllFeatures,
            target_index: 0,
            lookback_override: None,
        }
    }

    fn one_layer_plan(recipes: Vec<ModelRecipe>) -> DeepIlPlan {
        DeepIlPlan {
            layers: vec![LayerSpec {
                lookback: 12,
                recipes,
                input: LayerInput::RawFeatures,
                retrain_period: 5,
                embargo: 2,
            }],
            combiners: vec![Combiner {
                kind: CombinerKind::EqualWeighted,
                alpha: 1e-4,
                training_window: 5,
                embargo: 2,
            }],
            scoring_target: 0,
        }
    }

    #[test]
    fn layer_windows_match_the_stacked_arrangement() {
        assert_eq!(layer_window(1, &[4, 4], 1), (1, 4));
        assert_eq!(layer_window(2, &[4, 4], 1), (6, 9));
        assert_eq!(layer_window(1, &[3, 3], 0), (1, 3));
        assert_eq!(layer_window(2, &[3, 3], 0), (4, 6));
    }

    #[test]
    fn retrain_schedule_matches_the_benchmark_convention() {
        let eras = retrain_schedule(801, 1070, 50);
        assert_eq!(eras, vec![801, 851, 901, 951, 1001, 1051]);
        assert_eq!(retrain_schedule(10, 12, 50), vec![10]);
    }

    #[test]
    fn serving_intervals_partition_the_range() {
        for (start, end, t) in [(10u32, 47u32, 7u32), (5, 5, 1), (3, 29, 9)] {
            let schedule = retrain_schedule(start, end, t);
            let mut covered: Vec<u32> = Vec::new();
            for &r in &schedule {
                for e in r + 1..=r.saturating_add(t).min(end) {
                    covered.push(e);
                }
            }
            let expected: Vec<u32> = (start + 1..=end).collect();
            assert_eq!(covered, expected, "start {start} end {end} period {t}");
        }
    }

    #[test]
    fn single_member_equal_weight_matches_the_standalone_learner() {
        let ds = stream(1, 40);
        let plan = one_layer_plan(vec![recipe("solo", 12, 3)]);
        let out = run_deep_il(&ds, &plan, 15, 40).unwrap();
        let member = &out.members[0];
        let strategy = &out.strategies["equal_weighted"];
        for era in strategy.eras() {
            let m = member.get(era).unwrap();
            let s = strategy.get(era).unwrap();
            // Equal weight over one member is its percentile ranks.
            assert_eq!(s.scores, percentile_ranks(&m.scores));
        }
    }

    #[test]
    fn members_are_recipe_keyed_and_order_independent() {
        let ds = stream(2, 40);
        let mut plan = one_layer_plan(vec![recipe("a", 8, 1), recipe("b", 8, 2)]);
        let out_ab = run_deep_il(&ds, &plan, 15, 40).unwrap();
        plan.layers[0].recipes.reverse();
        let out_ba = run_deep_il(&ds, &plan, 15, 40).unwrap();
        let find = |o: &DeepIlOutcome, id: &str| {
            o.members
                .iter()
                .find(|s| s.model_id == id)
                .unwrap()
                .to_csv()
        };
        assert_eq!(find(&out_ab, "a"), find(&out_ba, "a"));
        assert_eq!(find(&out_ab, "b"), find(&out_ba, "b"));
    }

    #[test]
    fn outputs_are_causal_under_future_mutation() {
        let ds = stream(3, 50);
        let plan = one_layer_plan(vec![recipe("a", 8, 1), recipe("b", 8, 2)]);
        let cut = 35u32;
        let base = run_deep_il(&ds, &plan, 15, 50).unwrap();

        let mut mutated = ds.clone();
        for block in &mut mutated.eras {
            if block.era > cut {
                let n = block.n_rows();
                let m = block.n_features();
                let k = block.n_targets();
                let feats: Vec<i8> = (0..n)
                    .flat_map(|r| block.feature_row(r).to_vec())
                    .map(|v| if v == 2 { -2 } else { v + 1 })
                    .collect();
                let targs: Vec<f64> = (0..n)
                    .rev()
                    .flat_map(|r| (0..k).map(move |c| (r, c)))
                    .map(|(r, c)| block.target(r, c))
                    .collect();
                *block = EraBlock::new(block.era, block.row_ids.clone(), feats, targs, m, k);
            }
        }
        let after = run_deep_il(&mutated, &plan, 15, 50).unwrap();
        let truncate = |s: &PredictionSeries| {
            s.eras()
                .filter(|&e| e <= cut)
                .map(|e| (e, s.get(e).unwrap().scores.clone()))
                .collect::<Vec<_>>()
        };
        for (m0, m1) in base.members.iter().zip(&after.members) {
            assert_eq!(truncate(m0), truncate(m1));
        }
        for (name, s0) in &base.strategies {
            assert_eq!(truncate(s0), truncate(&after.strategies[name]));
        }
    }

    #[test]
    fn two_layer_plans_stack_and_stay_within_bounds() {
        let ds = stream(4, 60);
        let plan = DeepIlPlan {
            layers: vec![
                LayerSpec {
                    lookback: 10,
                    recipes: vec![recipe("l1a", 8, 1), recipe("l1b", 8, 2)],
                    input: LayerInput::RawFeatures,
                    retrain_period: 6,
                    embargo: 2,
                },
                LayerSpec {
                    lookback: 8,
                    recipes: vec![recipe("l2", 8, 3)],
                    input: LayerInput::Both,
                    retrain_period: 6,
                    embargo: 2,
                },
            ],
            combiners: vec![Combiner {
                kind: CombinerKind::EqualWeighted,
                alpha: 1e-4,
                training_window: 5,
                embargo: 2,
            }],
            scoring_target: 0,
        };
        let out = run_deep_il(&ds, &plan, 14, 60).unwrap();
        // Layer 2 first retrains at 14 + 8 + 2 = 24, serves from 25.
        assert_eq!(out.members.len(), 1);
        assert_eq!(out.members[0].first_valid_era, 25);
        assert_eq!(out.members[0].eras().next(), Some(25));
        // Combined output needs 5 window + 2 embargo beyond era 24.
        assert_eq!(out.first_combined_era, 32);
        let strat = &out.strategies["equal_weighted"];
        assert_eq!(strat.eras().next(), Some(32));
        assert_eq!(strat.eras().last(), Some(60));
    }

    #[test]
    fn ridge_combiner_runs_on_real_members() {
        let ds = stream(5, 45);
        let mut plan = one_layer_plan(vec![recipe("a", 10, 1), recipe("b", 10, 2)]);
        plan.combiners = vec![
            Combiner {
                kind: CombinerKind::EqualWeighted,
                alpha: 1e-4,
                training_window: 6,
                embargo: 2,
            },
            Combiner {
                kind: CombinerKind::NonNegativeRidge,
                alpha: 1e-4,
                training_window: 6,
                embargo: 2,
            },
        ];
        let out = run_deep_il(&ds, &plan, 15, 45).unwrap();
        assert!(out.strategies.contains_key("nonneg_ridge"));
        assert!(out.strategies["nonneg_ridge"].eras().count() > 0);
    }

    #[test]
    fn insufficient_history_is_reported() {
        let ds = stream(6, 30);
        let plan = one_layer_plan(vec![recipe("a", 8, 1)]);
        // First retrain at era 5 needs data back before era 1.
        assert!(matches!(
            run_deep_il(&ds, &plan, 5, 30),
            Err(DeepIlError::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn plan_validation_rejects_bad_wiring() {
        let ds = stream(7, 30);
        let mut plan = one_layer_plan(vec![recipe("a", 8, 1)]);
        plan.layers[0].input = LayerInput::Both;
        assert!(matches!(
            run_deep_il(&ds, &plan, 15, 30),
            Err(DeepIlError::InvalidPlan(_))
        ));

        let mut plan = one_layer_plan(vec![recipe("a", 8, 1)]);
        plan.scoring_target = 9;
        assert!(plan.validate(&ds).is_err());

        let mut plan = one_layer_plan(vec![recipe("a", 8, 1)]);
        plan.layers[0].recipes[0].feature_sample = FeatureSampleSpec::JackknifeDrop {
            group: "absent".into(),
        };
        assert!(plan.validate(&ds).is_err());
    }
}
