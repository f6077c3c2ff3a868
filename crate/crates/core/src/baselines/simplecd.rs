//! Welch two-sample test between the per-item scores of consecutive batches.

use crate::error::{Error, Result};
use crate::stats::{mean, unbiased_variance_floored};

/// `(mean a - mean b) / sqrt(s_a^2 / n_a + s_b^2 / n_b)` with unbiased,
/// floored variances.
pub fn welch_t(a: &[f64], b: &[f64], floor: f64) -> Result<f64> {
    let (va, vb) = (
        unbiased_variance_floored(a, floor)?,
        unbiased_variance_floored(b, floor)?,
    );
    let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    Ok((mean(a)? - mean(b)?) / se)
}

/// Remembers the previous step's score vector.
#[derive(Debug, Clone, Default)]
pub struct SimpleCdState {
    previous: Option<Vec<f64>>,
}

impl SimpleCdState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `scores` and returns `|t|` against the previous vector, if any.
    pub fn push(&mut self, scores: Vec<f64>, floor: f64) -> Result<Option<f64>> {
        if scores.len() < 2 {
            return Err(Error::InvalidConfig(
                "Welch test needs per-item scores: batch size must be at least 2".into(),
            ));
        }
        let stat = match &self.previous {
            Some(prev) => Some(welch_t(prev, &scores, floor)?.abs()),
            None => None,
        };
        self.previous = Some(scores);
        Ok(stat)
    }

    pub fn clear(&mut self) {
        self.previous = None;
    }
}
