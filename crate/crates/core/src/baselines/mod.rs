//! Comparison detectors driven through the same model and event-log
//! interface as the checkpoint detector. Both consume one-step-ahead scores
//! computed under the parameters before the step's update.

mod bocpd;
mod simplecd;

pub use bocpd::{bocpd_detect, student_t_ln_pdf, NigPrior, NigStats, RunLengthPosterior};
pub use simplecd::{welch_t, SimpleCdState};

use serde::{Deserialize, Serialize};

use crate::detector::{EventLog, Method, OnlineDetector, TestRecord};
use crate::error::{Error, Result};
use crate::models::ModelAdapter;
use crate::stats::mean;
use crate::types::{ChangepointEvent, MiniBatch, VARIANCE_FLOOR};

/// Cutoff grids swept when reporting a baseline's best configuration.
pub const BAYESCD_CUTOFFS: [f64; 4] = [0.3, 0.4, 0.5, 0.6];
pub const SIMPLECD_CUTOFFS: [f64; 4] = [2.0, 3.0, 4.0, 5.0];

fn default_min_distance() -> u64 {
    100
}

fn default_hazard() -> f64 {
    1.0 / 500.0
}

fn default_prune() -> f64 {
    1e-8
}

/// Settings of either baseline. `hazard`, `prior` and `prune_mass` only
/// affect BayesCD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Posterior mass in (0,1) for BayesCD, critical `|t|` for SimpleCD.
    pub cutoff: f64,
    #[serde(default = "default_min_distance")]
    pub min_distance: u64,
    #[serde(default = "default_hazard")]
    pub hazard: f64,
    #[serde(default)]
    pub prior: NigPrior,
    #[serde(default = "default_prune")]
    pub prune_mass: f64,
}

impl BaselineConfig {
    pub fn new(cutoff: f64) -> Self {
        Self {
            cutoff,
            min_distance: default_min_distance(),
            hazard: default_hazard(),
            prior: NigPrior::default(),
            prune_mass: default_prune(),
        }
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        match method {
            Method::Bayescd if !(self.cutoff > 0.0 && self.cutoff < 1.0) => Err(Error::InvalidConfig(format!(
                "BayesCD cutoff {} not in (0,1)",
                self.cutoff
            ))),
            Method::Simplecd if !(self.cutoff > 0.0 && self.cutoff.is_finite()) => Err(Error::InvalidConfig(format!(
                "SimpleCD cutoff {} must be positive",
                self.cutoff
            ))),
            _ => Ok(()),
        }
    }
}

fn point_event(tau: u64, stat: f64, cutoff: f64) -> ChangepointEvent {
    ChangepointEvent {
        tau,
        z: stat,
        threshold: cutoff,
        window_start: tau,
        window_end: tau,
        test_index: 0,
        local_index: 0,
        detected_at: tau,
    }
}

/// Shared stepping state: time bookkeeping, model, log.
struct Driver<M> {
    model: M,
    config: BaselineConfig,
    last_time: u64,
    last_detection: u64,
    log: EventLog,
}

impl<M: ModelAdapter> Driver<M> {
    fn new(model: M, config: BaselineConfig, method: Method) -> Result<Self> {
        config.validate(method)?;
        Ok(Self {
            model,
            config,
            last_time: 0,
            last_detection: 0,
            log: EventLog::new(method),
        })
    }

    /// Scores the batch under the pre-update parameters, then updates.
    fn scores_then_update(&mut self, batch: &MiniBatch<M::Item>) -> Result<Vec<f64>> {
        if batch.time != self.last_time + 1 {
            return Err(Error::NonMonotoneStream {
                expected: self.last_time + 1,
                got: batch.time,
            });
        }
        let scores = self.model.current_item_scores(batch)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("prediction score"));
        }
        self.model.update(batch)?;
        self.last_time = batch.time;
        Ok(scores)
    }

    fn record(&mut self, stat: f64, fire: bool) -> Result<Option<ChangepointEvent>> {
        let t = self.last_time;
        self.log.diagnostics.push(TestRecord {
            time: t,
            z: stat,
            threshold: self.config.cutoff,
            delta_i: None,
            rejected: fire,
            extrapolated: false,
        });
        if !fire {
            return Ok(None);
        }
        self.last_detection = t;
        self.model.start_segment()?;
        let e = point_event(t, stat, self.config.cutoff);
        self.log.events.push(e.clone());
        Ok(Some(e))
    }

    fn distance_ok(&self) -> bool {
        self.last_time.saturating_sub(self.last_detection) >= self.config.min_distance
    }
}

/// BayesCD: run-length posterior over batch-mean scores.
pub struct BayesCd<M: ModelAdapter> {
    driver: Driver<M>,
    posterior: RunLengthPosterior,
}

impl<M: ModelAdapter> BayesCd<M> {
    pub fn new(model: M, config: BaselineConfig) -> Result<Self> {
        let posterior = RunLengthPosterior::new(config.prior, config.hazard, config.prune_mass)?;
        Ok(Self {
            driver: Driver::new(model, config, Method::Bayescd)?,
            posterior,
        })
    }

    pub fn posterior(&self) -> &RunLengthPosterior {
        &self.posterior
    }
}

impl<M: ModelAdapter> OnlineDetector for BayesCd<M> {
    type Model = M;

    fn step(&mut self, batch: MiniBatch<M::Item>) -> Result<Option<ChangepointEvent>> {
        let v = mean(&self.driver.scores_then_update(&batch)?)?;
        self.posterior.step(v)?;
        let d = &self.driver;
        let w0 = self.posterior.changepoint_mass();
        let fire = bocpd_detect(
            &self.posterior,
            d.config.cutoff,
            d.config.min_distance,
            d.last_detection,
            d.last_time,
        );
        if fire {
            self.posterior.reset();
        }
        self.driver.record(w0, fire)
    }

    fn model(&self) -> &M {
        &self.driver.model
    }

    fn model_mut(&mut self) -> &mut M {
        &mut self.driver.model
    }

    fn log(&self) -> &EventLog {
        &self.driver.log
    }

    fn into_parts(self) -> (M, EventLog) {
        (self.driver.model, self.driver.log)
    }
}

/// SimpleCD: Welch test between consecutive per-item score vectors.
pub struct SimpleCd<M: ModelAdapter> {
    driver: Driver<M>,
    state: SimpleCdState,
}

impl<M: ModelAdapter> SimpleCd<M> {
    pub fn new(model: M, config: BaselineConfig) -> Result<Self> {
        Ok(Self {
            driver: Driver::new(model, config, Method::Simplecd)?,
            state: SimpleCdState::new(),
        })
    }
}

impl<M: ModelAdapter> OnlineDetector for SimpleCd<M> {
    type Model = M;

    fn step(&mut self, batch: MiniBatch<M::Item>) -> Result<Option<ChangepointEvent>> {
        let scores = self.driver.scores_then_update(&batch)?;
        let Some(stat) = self.state.push(scores, VARIANCE_FLOOR)? else {
            return Ok(None);
        };
        let fire = stat > self.driver.config.cutoff && self.driver.distance_ok();
        self.driver.record(stat, fire)
    }

    fn model(&self) -> &M {
        &self.driver.model
    }

    fn model_mut(&mut self) -> &mut M {
        &mut self.driver.model
    }

    fn log(&self) -> &EventLog {
        &self.driver.log
    }

    fn into_parts(self) -> (M, EventLog) {
        (self.driver.model, self.driver.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::PassThrough;
    use crate::rng::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn simplecd_min_distance_suppresses() {
        let mut d = SimpleCd::new(PassThrough, BaselineConfig::new(10.0)).unwrap();
        let mut rng = seeded_rng(0);
        let mut level = 0.0;
        for t in 1..=400u64 {
            if t == 150 || t == 200 || t == 320 {
                level += 50.0;
            }
            let items = (0..10).map(|_| level + rng.sample::<f64, _>(StandardNormal)).collect();
            d.step(MiniBatch::new(t, items).unwrap()).unwrap();
        }
        assert_eq!(d.log().taus(), vec![150, 320]);
    }

    #[test]
    fn simplecd_nothing_before_min_distance() {
        let mut d = SimpleCd::new(PassThrough, BaselineConfig::new(3.0)).unwrap();
        for t in 1..=99u64 {
            let items = vec![t as f64 * 100.0, t as f64 * 100.0 + 1.0];
            assert!(d.step(MiniBatch::new(t, items).unwrap()).unwrap().is_none());
        }
    }

    #[test]
    fn bayescd_detects_and_resets() {
        let mut d = BayesCd::new(PassThrough, BaselineConfig::new(0.5)).unwrap();
        let mut rng = seeded_rng(3);
        for t in 1..=800u64 {
            let mu = if t >= 400 { 6.0 } else { 0.0 };
            d.step(MiniBatch::new(t, vec![mu + rng.sample::<f64, _>(StandardNormal)]).unwrap())
                .unwrap();
        }
        let taus = d.log().taus();
        assert!(!taus.is_empty());
        assert!(taus.iter().any(|&t| t.abs_diff(400) <= 5), "{taus:?}");
    }

    #[test]
    fn config_validation() {
        assert!(BayesCd::new(PassThrough, BaselineConfig::new(1.5)).is_err());
        assert!(SimpleCd::new(PassThrough, BaselineConfig::new(-1.0)).is_err());
        let json = r#"{"cutoff": 0.5, "bogus": 1}"#;
        assert!(serde_json::from_str::<BaselineConfig>(json).is_err());
        let cfg: BaselineConfig = serde_json::from_str(r#"{"cutoff": 0.5}"#).unwrap();
        assert_eq!(cfg, BaselineConfig::new(0.5));
    }
}
