//! Sequential changepoint detection on the prediction scores of a model that
//! is trained online.
//!
//! The checkpoint detector caches model parameters every `D = T - 2 alpha`
//! steps and tests the scores of the last `T` batches, computed under the
//! oldest live checkpoint, with a Gaussian GLR test whose error level decays
//! geometrically across tests. Thresholds come from Monte Carlo calibration.

pub mod baselines;
pub mod calibration;
pub mod cl;
pub mod detector;
pub mod error;
pub mod eval;
pub mod glr;
pub mod models;
pub mod published;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod types;

pub use calibration::{CalibrationTable, QuantileEntry, ThresholdFit};
pub use detector::{error_schedule, CheckpointDetector, EventLog, Method, OnlineDetector, TestRecord};
pub use error::{Error, Result};
pub use glr::{offline_detect, z_statistic, OfflineResult, ZStatistic};
pub use models::{ModelAdapter, MovingAverageModel, MultiHeadClassifier, PassThrough};
pub use types::{ChangepointEvent, DetectorConfig, LabeledExample, MiniBatch, ScoreWindow};
