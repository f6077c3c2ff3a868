use serde::{Deserialize, Serialize};

use super::ModelAdapter;
use crate::error::{Error, Result};
use crate::types::MiniBatch;

/// Single-parameter tracker of the stream mean, trained on `0.5 (y - theta)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageModel {
    pub theta: f64,
    pub rho: f64,
}

impl MovingAverageModel {
    pub fn new(theta: f64, rho: f64) -> Self {
        Self { theta, rho }
    }
}

/// One gradient step on the batch-mean squared loss: `theta += rho (ybar - theta)`.
pub fn ma_update(model: &mut MovingAverageModel, batch: &MiniBatch<f64>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptySegment);
    }
    let ybar = batch.items.iter().sum::<f64>() / batch.len() as f64;
    model.theta += model.rho * (ybar - model.theta);
    if !model.theta.is_finite() {
        return Err(Error::NonFinite("moving average"));
    }
    Ok(())
}

/// `(1/b) sum 0.5 (y_i - theta)^2`.
pub fn ma_score(batch: &MiniBatch<f64>, theta: f64) -> f64 {
    batch.items.iter().map(|y| 0.5 * (y - theta).powi(2)).sum::<f64>() / batch.len() as f64
}

impl ModelAdapter for MovingAverageModel {
    type Item = f64;
    type Params = f64;

    fn update(&mut self, batch: &MiniBatch<f64>) -> Result<()> {
        ma_update(self, batch)
    }

    fn snapshot(&self) -> f64 {
        self.theta
    }

    fn restore(&mut self, params: &f64) {
        self.theta = *params;
    }

    fn item_scores(&self, batch: &MiniBatch<f64>, theta: &f64) -> Result<Vec<f64>> {
        Ok(batch.items.iter().map(|y| 0.5 * (y - theta).powi(2)).collect())
    }

    fn score(&self, batch: &MiniBatch<f64>, theta: &f64) -> Result<f64> {
        Ok(ma_score(batch, *theta))
    }
}
