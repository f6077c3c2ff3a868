//! Domain types shared by every detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default floor applied to every maximum-likelihood variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Default jitter inside the discrete-score log transform.
pub const SCORE_JITTER: f64 = 1e-8;

/// One labeled observation: an input vector and its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(x: Vec<f64>, label: usize) -> Self {
        Self { x, label }
    }
}

/// The `b` observations received together at step `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch<T> {
    pub time: u64,
    pub items: Vec<T>,
}

impl<T> MiniBatch<T> {
    pub fn new(time: u64, items: Vec<T>) -> Result<Self> {
        if time == 0 {
            return Err(Error::InvalidConfig("batch time index starts at 1".into()));
        }
        if items.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(Self { time, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Scores computed under a single checkpoint.
///
/// `values[j]` is the score of global step `start + j + 1`; the window covers
/// `(start, start + T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWindow {
    pub start: u64,
    pub values: Vec<f64>,
}

impl ScoreWindow {
    pub fn new(start: u64, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score window"));
        }
        Ok(Self { start, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Global time of the last score.
    pub fn end(&self) -> u64 {
        self.start + self.values.len() as u64
    }

    /// Global time of the 1-based local position `c`.
    pub fn global_time(&self, c: usize) -> u64 {
        self.start + c as u64
    }
}

/// Gaussian maximum-likelihood summary of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStats {
    pub n: usize,
    pub mean: f64,
    /// MLE (1/n) variance, floored.
    pub var: f64,
}

impl SegmentStats {
    pub fn from_values(values: &[f64], floor: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySegment);
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok(Self {
            n,
            mean,
            var: (ss / n as f64).max(floor),
        })
    }
}

/// One declared changepoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointEvent {
    /// First step of the new segment.
    pub tau: u64,
    pub z: f64,
    pub threshold: f64,
    pub window_start: u64,
    pub window_end: u64,
    pub test_index: u32,
    /// 1-based split position inside the test window.
    #[serde(default)]
    pub local_index: usize,
    /// Step at which the detection fired.
    #[serde(default)]
    pub detected_at: u64,
}

/// Hyperparameters of the checkpoint detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Window size T.
    pub window: usize,
    /// Minimum segment size alpha on each side of a split.
    pub alpha: usize,
    /// Total Type-I error budget per segment.
    pub delta: f64,
    /// Geometric decay of the per-test error.
    pub eta: f64,
    #[serde(default = "default_var_floor")]
    pub var_floor: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Restore the nearest checkpoint left of tau after a detection.
    #[serde(default)]
    pub recover: bool,
}

fn default_var_floor() -> f64 {
    VARIANCE_FLOOR
}

fn default_jitter() -> f64 {
    SCORE_JITTER
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::with_window(100)
    }
}

impl DetectorConfig {
    /// Window `window` with the default border `floor(T/4)`, delta 1e-4, eta 0.99.
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            alpha: window / 4,
            delta: 1e-4,
            eta: 0.99,
            var_floor: VARIANCE_FLOOR,
            jitter: SCORE_JITTER,
            recover: false,
        }
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn alpha(mut self, alpha: usize) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn recover(mut self, recover: bool) -> Self {
        self.recover = recover;
        self
    }

    /// Stride between consecutive tests, `T - 2 alpha`.
    pub fn stride(&self) -> usize {
        self.window.saturating_sub(2 * self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha == 0 || 2 * self.alpha >= self.window {
            return Err(Error::InvalidConfig(format!(
                "border alpha = {} must satisfy 0 < alpha < T/2 for T = {}",
                self.alpha, self.window
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta = {} not in (0,1)", self.delta)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!("eta = {} not in (0,1)", self.eta)));
        }
        if self.var_floor.is_nan() || self.var_floor <= 0.0 || self.jitter.is_nan() || self.jitter <= 0.0 {
            return Err(Error::InvalidConfig(
                "variance floor and jitter must be positive".into(),
            ));
        }
        Ok(())
    }
}
