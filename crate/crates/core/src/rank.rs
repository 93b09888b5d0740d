//! Percentile ranking with average-rank tie handling.
//!
//! Ranks are `(position - 0.5) / n` with 1-based positions, so they lie
//! strictly inside (0, 1) and tied values share the mean of their positions.
//! This is the single rank convention used by the scoring function, the
//! factor-timing weights, the ensemble combiners and the disagreement
//! signals.

/// Percentile ranks in (0, 1). Panics on NaN input.
pub fn percentile_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    assert!(n > 0, "cannot rank an empty slice");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("NaN in rank input")
    });

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j+1 share the average position.
        let avg_pos = (i + 1 + j + 1) as f64 / 2.0;
        let rank = (avg_pos - 0.5) / n as f64;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Percentile ranks shifted to (-0.5, 0.5).
pub fn centered_ranks(values: &[f64]) -> Vec<f64> {
    let mut r = percentile_ranks(values);
    for v in &mut r {
        *v -= 0.5;
    }
    r
}
