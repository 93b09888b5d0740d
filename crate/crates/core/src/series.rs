//! Per-era prediction vectors keyed to row ids, with provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Predictions of one model or strategy across eras. Scores are stored in
/// dataset row order; `row_ids` mirrors the source era block.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub model_id: String,
    pub layer: u32,
    pub first_valid_era: u32,
    entries: BTreeMap<u32, EraPredictions>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EraPredictions {
    pub row_ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl PredictionSeries {
    pub fn new(model_id: impl Into<String>, layer: u32, first_valid_era: u32) -> Self {
        PredictionSeries {
            model_id: model_id.into(),
            layer,
            first_valid_era,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, era: u32, row_ids: Vec<String>, scores: Vec<f64>) {
        assert!(
            era >= self.first_valid_era,
            "era {era} before first_valid_era {}",
            self.first_valid_era
        );
        assert_eq!(row_ids.len(), scores.len(), "row/score length mismatch");
        assert!(scores.iter().all(|s| s.is_finite()), "non-finite score");
        self.entries.insert(era, EraPredictions { row_ids, scores });
    }

    pub fn get(&self, era: u32) -> Option<&EraPredictions> {
        self.entries.get(&era)
    }

    pub fn eras(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn covers(&self, eras: impl IntoIterator<Item = u32>) -> bool {
        eras.into_iter().all(|e| self.entries.contains_key(&e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV rows `era,id,score`, eras ascending, rows in stored order.
    /// Scores use 17 significant digits so reruns are byte-comparable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("era,id,score\n");
        for (era, preds) in &self.entries {
            for (id, score) in preds.row_ids.iter().zip(&preds.scores) {
                let _ = writeln!(out, "{era},{id},{}", format_sig17(*score));
            }
        }
        out
    }
}

/// Fixed 17-significant-digit scientific encoding; round-trips any f64.
pub fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}
