//! Property tests for the structural invariants of the core primitives.

use proptest::prelude::*;

use strata_core::dataset::{
    apply_row_sampling, generate_synthetic_stream, load_dataset, save_dataset, select_training_eras,
    DataFormat, RegimeStyle, RowSampling, SamplingScheme, SynthConfig,
};
use strata_core::linalg::Matrix;
use strata_core::metrics::{era_score, max_drawdown};
use strata_core::tsfeat::{ema, rft, signature_level2, RftSpec};

fn synth_config(eras: u32, rows: usize, features: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        eras,
        rows_min: rows,
        rows_max: rows + 5,
        features,
        groups: 2.min(features),
        targets: 1,
        informative_per_regime: 1.max(features / 3),
        regime_switch_eras: vec![],
        regime_style: RegimeStyle::Fresh,
        noise_sigma: 0.3,
        bin_proportions: None,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dataset_round_trips_through_csv(seed in 0u64..1000, eras in 1u32..6, features in 1usize..8) {
        let ds = generate_synthetic_stream(&synth_config(eras, 8, features, seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        save_dataset(&ds, &path, DataFormat::Csv).unwrap();
        let back = load_dataset(&path, DataFormat::Csv).unwrap();
        prop_assert_eq!(ds, back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_sampling_only_drops_rows_and_is_idempotent(seed in 0u64..10_000) {
        let ds = generate_synthetic_stream(&synth_config(1, 30, 4, seed)).unwrap();
        let block = &ds.eras[0];
        let scheme = SamplingScheme { kind: RowSampling::DropMedian, era_stride: 1, era_offset: 0 };
        let once = apply_row_sampling(block, &scheme, 0).unwrap();
        // Every surviving row is present in the original with identical values.
        for r in 0..once.n_rows() {
            let orig = block.row_ids.iter().position(|id| id == &once.row_ids[r]).unwrap();
            prop_assert_eq!(once.feature_row(r), block.feature_row(orig));
            prop_assert_eq!(once.target(r, 0), block.target(orig, 0));
            prop_assert!(once.target(r, 0) != 0.0);
        }
        let twice = apply_row_sampling(&once, &scheme, 0).unwrap();
        prop_assert_eq!(&once, &twice);
    }

    #[test]
    fn era_offsets_partition_the_input(
        mut eras in proptest::collection::vec(1u32..500, 1..40),
        stride in 1u32..7,
    ) {
        eras.sort_unstable();
        eras.dedup();
        let mut union: Vec<u32> = Vec::new();
        for offset in 0..stride {
            let part = select_training_eras(&eras, stride, offset);
            union.extend(part);
        }
        union.sort_unstable();
        prop_assert_eq!(union, eras);
    }

    #[test]
    fn era_score_is_rank_invariant_and_bounded(
        preds in proptest::collection::vec(-5.0f64..5.0, 8..40),
        scale in 0.1f64..3.0,
    ) {
        let n = preds.len();
        let targets: Vec<f64> = (0..n).map(|i| [-0.5, -0.25, 0.0, 0.25, 0.5][i % 5]).collect();
        let a = era_score(&preds, &targets).unwrap();
        prop_assert!((-1.0..=1.0).contains(&a));
        // Strictly increasing transform: scale then atan.
        let g: Vec<f64> = preds.iter().map(|p| (p * scale).atan()).collect();
        let b = era_score(&g, &targets).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn era_score_is_antisymmetric_without_ties(seed in 0u64..10_000) {
        let mut rng = strata_core::rng::Rng::from_seed(seed);
        let n = 20;
        let preds: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let targets: Vec<f64> = (0..n).map(|i| [-0.5, -0.25, 0.0, 0.25, 0.5][i % 5]).collect();
        let neg: Vec<f64> = preds.iter().map(|p| -p).collect();
        let a = era_score(&preds, &targets).unwrap();
        let b = era_score(&neg, &targets).unwrap();
        prop_assert!((a + b).abs() < 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn drawdown_bounds_and_zero_condition(
        scores in proptest::collection::vec(-1.0f64..1.0, 1..60),
    ) {
        let dd = max_drawdown(&scores);
        prop_assert!(dd >= 0.0);
        // Prefix sums including the empty prefix.
        let mut cum = 0.0;
        let mut prefixes = vec![0.0];
        for s in &scores {
            cum += s;
            prefixes.push(cum);
        }
        let hi = prefixes.iter().cloned().fold(f64::MIN, f64::max);
        let lo = prefixes.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(dd <= hi - lo + 1e-12);
        let all_non_negative = scores.iter().all(|&s| s >= 0.0);
        prop_assert_eq!(dd == 0.0, all_non_negative);
    }

    #[test]
    fn ema_matches_its_closed_form(
        xs in proptest::collection::vec(-10.0f64..10.0, 1..50),
        alpha_idx in 0usize..3,
    ) {
        let alpha = [0.00125, 0.02, 1.0][alpha_idx];
        let rec = ema(&xs, alpha).unwrap();
        for t in 0..xs.len() {
            let mut closed = (1.0 - alpha).powi(t as i32) * xs[0];
            for i in 1..=t {
                closed += alpha * (1.0 - alpha).powi((t - i) as i32) * xs[i];
            }
            prop_assert!((rec[t] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn signature_ignores_duplicated_sample_points(
        rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 2..8),
        at in 0usize..6,
    ) {
        let path = Matrix::from_rows(rows.clone());
        let dup_at = at.min(rows.len() - 1);
        let mut padded = rows.clone();
        padded.insert(dup_at, rows[dup_at].clone());
        let padded = Matrix::from_rows(padded);
        let a = signature_level2(&path).unwrap();
        let b = signature_level2(&padded).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rft_norm_is_bounded_by_sqrt_two(
        x in proptest::collection::vec(-100.0f64..100.0, 1..12),
        p in 1usize..6,
        seed in 0u64..1000,
    ) {
        let out = rft(&x, &RftSpec { feature_sets: p, seed });
        prop_assert_eq!(out.len(), 14 * p);
        let norm
            = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= std::f64::consts::SQRT_2 + 1e-12);
    }
}
