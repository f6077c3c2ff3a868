//! The model contract used by every detector, and the concrete models.

mod moving_average;
mod multihead;

pub use moving_average::{ma_score, ma_update, MovingAverageModel};
pub use multihead::{Matrix, MultiHeadClassifier, MultiHeadParams};

use crate::error::Result;
use crate::stats::mean;
use crate::types::MiniBatch;

/// A model trained online by gradient steps whose parameters can be cached and
/// used later to score unseen batches.
pub trait ModelAdapter {
    type Item;
    /// A deep copy of the parameters.
    type Params: Clone;

    /// One optimisation step on `batch`.
    fn update(&mut self, batch: &MiniBatch<Self::Item>) -> Result<()>;

    fn snapshot(&self) -> Self::Params;

    fn restore(&mut self, params: &Self::Params);

    /// Per-item prediction scores of `batch` under `params`.
    fn item_scores(&self, batch: &MiniBatch<Self::Item>, params: &Self::Params) -> Result<Vec<f64>>;

    /// Batch-average prediction score under `params`.
    fn score(&self, batch: &MiniBatch<Self::Item>, params: &Self::Params) -> Result<f64> {
        mean(&self.item_scores(batch, params)?)
    }

    /// Per-item scores under the live parameters (one-step-ahead scores).
    fn current_item_scores(&self, batch: &MiniBatch<Self::Item>) -> Result<Vec<f64>> {
        self.item_scores(batch, &self.snapshot())
    }

    /// Called once after each declared changepoint, before the new segment's
    /// first checkpoint is cached.
    fn start_segment(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Treats every observation as its own score. For streams that already are
/// prediction scores.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl ModelAdapter for PassThrough {
    type Item = f64;
    type Params = ();

    fn update(&mut self, _batch: &MiniBatch<f64>) -> Result<()> {
        Ok(())
    }

    fn snapshot(&self) {}

    fn restore(&mut self, _params: &()) {}

    fn item_scores(&self, batch: &MiniBatch<f64>, _params: &()) -> Result<Vec<f64>> {
        Ok(batch.items.clone())
    }
}
