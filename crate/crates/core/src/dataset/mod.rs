//! Temporal tabular data model and sampling schemes.
//!
//! A dataset is an ordered sequence of eras. Each era holds a block of rows
//! (opaque ids, binned features, binned targets). Feature values live in the
//! five integer bins -2..=2 and target values in the five centred bins
//! {-0.5, -0.25, 0, 0.25, 0.5}. Datasets are immutable after load or
//! generation and safe to share across threads.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset, DataFormat};
pub use synth::{generate_synthetic_stream, RegimeStyle, SynthConfig};

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

/// Legal feature bins.
pub const FEATURE_BINS: [i8; 5] = [-2, -1, 0, 1, 2];
/// Legal centred target bins.
pub const TARGET_BINS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];

const CENTRED_MEDIAN: f64 = 0.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("illegal bin value {value} in column '{column}' at line {line}")]
    IllegalBinValue {
        value: String,
        column: String,
        line: usize,
    },
    #[error("duplicate row id '{id}' in era {era}")]
    DuplicateRowId { id: String, era: u32 },
    #[error("era {era} has no rows left after sampling")]
    EmptyEraAfterSampling { era: u32 },
    #[error("unknown feature group '{0}'")]
    UnknownGroup(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One era of rows: ids, an `N x M` feature matrix and an `N x K` target
/// matrix, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EraBlock {
    pub era: u32,
    pub row_ids: Vec<String>,
    features: Vec<i8>,
    targets: Vec<f64>,
    n_features: usize,
    n_targets: usize,
}

impl EraBlock {
    pub fn new(
        era: u32,
        row_ids: Vec<String>,
        features: Vec<i8>,
        targets: Vec<f64>,
        n_features: usize,
        n_targets: usize,
    ) -> Self {
        let n = row_ids.len();
        assert_eq!(features.len(), n * n_features, "feature matrix shape");
        assert_eq!(targets.len(), n * n_targets, "target matrix shape");
        EraBlock {
            era,
            row_ids,
            features,
            targets,
            n_features,
            n_targets,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn feature(&self, row: usize, col: usize) -> i8 {
        self.features[row * self.n_features + col]
    }

    pub fn feature_row(&self, row: usize) -> &[i8] {
        &self.features[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn target(&self, row: usize, col: usize) -> f64 {
        self.targets[row * self.n_targets + col]
    }

    /// One target column in row order.
    pub fn target_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.target(r, col)).collect()
    }

    /// One feature column in row order, as f64.
    pub fn feature_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| f64::from(self.feature(r, col)))
            .collect()
    }
}

/// Era-level row filter plus regular era sampling (stride/offset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SamplingScheme {
    pub kind: RowSampling,
    pub era_stride: u32,
    pub era_offset: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSampling {
    /// S1: keep every row.
    All,
    /// S2: keep rows whose target differs from the centred median (0).
    DropMedian,
}

impl SamplingScheme {
    pub fn all() -> Self {
        SamplingScheme {
            kind: RowSampling::All,
            era_stride: 1,
            era_offset: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.era_stride == 0 {
            return Err(DatasetError::InvalidConfig("era_stride must be >= 1".into()));
        }
        if self.era_offset >= self.era_stride {
            return Err(DatasetError::InvalidConfig(format!(
                "era_offset {} must be < era_stride {}",
                self.era_offset, self.era_stride
            )));
        }
        Ok(())
    }
}

/// How a model's global feature set is chosen.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSampleSpec {
    AllFeatures,
    RandomFraction { fraction: f64, seed: u64 },
    JackknifeDrop { group: String },
}

/// The full temporal tabular dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTabularDataset {
    pub eras: Vec<EraBlock>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub feature_groups: BTreeMap<String, BTreeSet<usize>>,
}

impl TemporalTabularDataset {
    /// Validates all structural invariants; called by the loader and the
    /// generator.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let m = self.feature_names.len();
        let k = self.target_names.len();
        if self.eras.is_empty() {
            return Err(DatasetError::MalformedFile("dataset has no eras".into()));
        }
        let mut prev_era = 0u32;
        for block in &self.eras {
            if block.era == 0 {
                return Err(DatasetError::MalformedFile("era index 0 (eras start at 1)".into()));
            }
            if block.era <= prev_era {
                return Err(DatasetError::MalformedFile(format!(
                    "era {} not strictly increasing after {}",
                    block.era, prev_era
                )));
            }
            prev_era = block.era;
            if block.n_features != m || block.n_targets != k {
                return Err(DatasetError::MalformedFile(format!(
                    "era {} has {}x{} columns, expected {}x{}",
                    block.era, block.n_features, block.n_targets, m, k
                )));
            }
            if block.n_rows() == 0 {
                return Err(DatasetError::MalformedFile(format!("era {} is empty", block.era)));
            }
            let mut seen = HashSet::with_capacity(block.n_rows());
            for id in &block.row_ids {
                if !seen.insert(id.as_str()) {
                    return Err(DatasetError::DuplicateRowId {
                        id: id.clone(),
                        era: block.era,
                    });
                }
            }
            for v in &block.features {
                if !FEATURE_BINS.contains(v) {
                    return Err(DatasetError::IllegalBinValue {
                        value: v.to_string(),
                        column: "<feature>".into(),
                        line: 0,
                    });
                }
            }
            for v in &block.targets {
                if !TARGET_BINS.iter().any(|b| b == v) {
                    return Err(DatasetError::IllegalBinValue {
                        value: v.to_string(),
                        column: "<target>".into(),
                        line: 0,
                    });
                }
            }
        }
        if !self.feature_groups.is_empty() {
            let mut covered = vec![false; m];
            for (name, members) in &self.feature_groups {
                for &j in members {
                    if j >= m {
                        return Err(DatasetError::MalformedFile(format!(
                            "group '{name}' references feature index {j} out of {m}"
                        )));
                    }
                    covered[j] = true;
                }
            }
            if let Some(j) = covered.iter().position(|c| !c) {
                return Err(DatasetError::MalformedFile(format!(
                    "feature '{}' belongs to no group",
                    self.feature_names[j]
                )));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn era_indices(&self) -> Vec<u32> {
        self.eras.iter().map(|b| b.era).collect()
    }

    pub fn first_era(&self) -> u32 {
        self.eras[0].era
    }

    pub fn last_era(&self) -> u32 {
        self.eras[self.eras.len() - 1].era
    }

    pub fn block(&self, era: u32) -> Option<&EraBlock> {
        self.eras
            .binary_search_by_key(&era, |b| b.era)
            .ok()
            .map(|i| &self.eras[i])
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_names.iter().position(|t| t == name)
    }
}

/// Row indices kept by the era-level filter, in block order.
pub fn sampled_row_indices(
    block: &EraBlock,
    scheme: &SamplingScheme,
    target_index: usize,
) -> Result<Vec<usize>, DatasetError> {
    assert!(target_index < block.n_targets, "target index out of range");
    let keep: Vec<usize> = match scheme.kind {
        RowSampling::All => (0..block.n_rows()).collect(),
        RowSampling::DropMedian => (0..block.n_rows())
            .filter(|&r| block.target(r, target_index) != CENTRED_MEDIAN)
            .collect(),
    };
    if keep.is_empty() {
        return Err(DatasetError::EmptyEraAfterSampling { era: block.era });
    }
    Ok(keep)
}

/// Applies the era-level row filter. S1 is the identity; S2 keeps rows whose
/// selected target is away from the centred median.
pub fn apply_row_sampling(
    block: &EraBlock,
    scheme: &SamplingScheme,
    target_index: usize,
) -> Result<EraBlock, DatasetError> {
    let keep = sampled_row_indices(block, scheme, target_index)?;
    if keep.len() == block.n_rows() {
        return Ok(block.clone());
    }
    let m = block.n_features;
    let k = block.n_targets;
    let mut ids = Vec::with_capacity(keep.len());
    let mut feats = Vec::with_capacity(keep.len() * m);
    let mut targs = Vec::with_capacity(keep.len() * k);
    for &r in &keep {
        ids.push(block.row_ids[r].clone());
        feats.extend_from_slice(block.feature_row(r));
        targs.extend_from_slice(&block.targets[r * k..(r + 1) * k]);
    }
    Ok(EraBlock::new(block.era, ids, feats, targs, m, k))
}

/// Regular era sampling: keeps eras whose position in `available` is
/// congruent to `offset` modulo `stride`. The offsets 0..stride-1 partition
/// the input.
pub fn select_training_eras(available: &[u32], stride: u32, offset: u32) -> Vec<u32> {
    assert!(stride >= 1, "stride must be >= 1");
    assert!(offset < stride, "offset must be < stride");
    available
        .iter()
        .enumerate()
        .filter(|(pos, _)| pos % stride as usize == offset as usize)
        .map(|(_, &e)| e)
        .collect()
}

/// Resolves a feature-sampling spec into a sorted set of feature indices.
pub fn resolve_feature_sample(
    spec: &FeatureSampleSpec,
    dataset: &TemporalTabularDataset,
) -> Result<Vec<usize>, DatasetError> {
    let m = dataset.n_features();
    match spec {
        FeatureSampleSpec::AllFeatures => Ok((0..m).collect()),
        FeatureSampleSpec::RandomFraction { fraction, seed } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(DatasetError::InvalidConfig(format!(
                    "feature fraction {fraction} outside (0, 1]"
                )));
            }
            let count = ((fraction * m as f64).floor() as usize).max(1);
            let mut rng = crate::rng::Rng::from_seed(*seed).derive("feature-sample", 0);
            Ok(rng.sample_without_replacement(m, count))
        }
        FeatureSampleSpec::JackknifeDrop { group } => {
            let dropped = dataset
                .feature_groups
                .get(group)
                .ok_or_else(|| DatasetError::UnknownGroup(group.clone()))?;
            Ok((0..m).filter(|j| !dropped.contains(j)).collect())
        }
    }
}
