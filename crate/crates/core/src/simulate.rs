//! Piecewise-constant mean series with Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::types::MiniBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanShiftSpec {
    pub segments: usize,
    /// Observations per step.
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Smallest mean jump, in units of `sigma`; jumps are drawn from `[shift, 2 shift]`.
    pub shift: f64,
    pub sigma: f64,
    pub seed: u64,
}

fn default_batch() -> usize {
    1
}

impl Default for MeanShiftSpec {
    fn default() -> Self {
        Self {
            segments: 7,
            batch: 1,
            min_len: 200,
            max_len: 300,
            shift: 4.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

/// Observations at times `1..=n`, `batch` per step, and the first time of
/// each new segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub batch: usize,
    /// Row-major `n x batch`.
    pub values: Vec<f64>,
    pub means: Vec<f64>,
    pub changepoints: Vec<u64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len() / self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn batches(&self) -> Vec<MiniBatch<f64>> {
        self.values
            .chunks(self.batch)
            .enumerate()
            .map(|(i, v)| MiniBatch {
                time: i as u64 + 1,
                items: v.to_vec(),
            })
            .collect()
    }
}

pub fn mean_shift_series(spec: &MeanShiftSpec) -> Result<Series> {
    if spec.segments == 0 || spec.batch == 0 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::InvalidConfig(
            "need segments, batch >= 1 and 1 <= min_len <= max_len".into(),
        ));
    }
    if spec.sigma.is_nan() || spec.sigma <= 0.0 || spec.shift.is_nan() || spec.shift < 0.0 {
        return Err(Error::InvalidConfig(
            "sigma must be positive and shift non-negative".into(),
        ));
    }
    let mut rng = seeded_rng(spec.seed);
    let mut values = Vec::new();
    let mut means = Vec::with_capacity(spec.segments);
    let mut changepoints = Vec::new();
    let mut mu = 0.0;
    for k in 0..spec.segments {
        if k > 0 {
            let jump = spec.shift * spec.sigma * (1.0 + rng.random::<f64>());
            mu += if rng.random::<bool>() { jump } else { -jump };
            changepoints.push((values.len() / spec.batch) as u64 + 1);
        }
        means.push(mu);
        let len = rng.random_range(spec.min_len..=spec.max_len);
        for _ in 0..len * spec.batch {
            values.push(mu + spec.sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(Series {
        batch: spec.batch,
        values,
        means,
        changepoints,
    })
}
