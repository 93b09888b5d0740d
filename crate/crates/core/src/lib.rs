//! Walk-forward deep incremental-learning engine for temporal tabular data
//! streams.
//!
//! The crate is organised around the lifecycle of a backtest:
//!
//! - [`dataset`]: the temporal tabular data model, CSV ingestion, era/row/
//!   feature sampling schemes and a synthetic regime-switching generator.
//! - [`gbdt`]: from-scratch gradient-boosted regression trees with prefix
//!   snapshots, split-count importance and structural similarity.
//! - [`tsfeat`]: EMA, per-era feature-performance series, lookback slicing,
//!   level-2 path signatures and random Fourier features.
//! - [`factor_timing`]: factor-timing baselines driven by forecasts of the
//!   feature-performance series.
//! - [`deep_il`]: the layered incremental-learning orchestrator (windowing,
//!   retrain schedules, ensemble strategies, layer-2 combiners).
//! - [`hedging`]: model-disagreement tail-risk signals and static/dynamic
//!   hedges.
//! - [`metrics`]: the per-era correlation score and aggregate portfolio
//!   metrics used to evaluate every strategy.
//!
//! All randomness flows through [`rng::Rng`], a splittable counter-based
//! generator, so every artefact is a pure function of its seeds.

pub mod dataset;
pub mod deep_il;
pub mod factor_timing;
pub mod gbdt;
pub mod hedging;
pub mod linalg;
pub mod metrics;
pub mod rank;
pub mod rng;
pub mod series;
pub mod tsfeat;
