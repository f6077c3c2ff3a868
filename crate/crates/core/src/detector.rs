//! Online checkpoint detector: ring buffer of recent batches, parameter
//! checkpoints every `D = T - 2 alpha` steps, and a GLR test every `D` steps
//! once the buffer is full, at an annealed per-test error level.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationTable;
use crate::error::{Error, Result};
use crate::glr::SplitScanner;
use crate::models::ModelAdapter;
use crate::types::{ChangepointEvent, DetectorConfig, MiniBatch};

/// Per-test error level `(1 - eta) eta^i delta`.
pub fn error_schedule(delta: f64, eta: f64, i: u32) -> f64 {
    (1.0 - eta) * eta.powi(i as i32) * delta
}

/// Which detector produced an event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Checkpoint,
    Bayescd,
    Simplecd,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Checkpoint => "checkpoint",
            Method::Bayescd => "bayescd",
            Method::Simplecd => "simplecd",
        })
    }
}

/// One executed test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    /// Global step at which the test ran.
    pub time: u64,
    pub z: f64,
    pub threshold: f64,
    /// Per-test error level; absent for the baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_i: Option<f64>,
    pub rejected: bool,
    /// `delta_i` lies below the smallest tabulated level.
    #[serde(default)]
    pub extrapolated: bool,
}

/// Everything a detector reports over one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub method: Method,
    pub events: Vec<ChangepointEvent>,
    pub diagnostics: Vec<TestRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EventLog {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            events: Vec::new(),
            diagnostics: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn taus(&self) -> Vec<u64> {
        self.events.iter().map(|e| e.tau).collect()
    }
}

/// Common driver interface shared by the checkpoint detector and the baselines.
pub trait OnlineDetector {
    type Model: ModelAdapter;

    /// Consumes the batch for the next global step.
    fn step(&mut self, batch: MiniBatch<<Self::Model as ModelAdapter>::Item>) -> Result<Option<ChangepointEvent>>;

    fn model(&self) -> &Self::Model;

    fn model_mut(&mut self) -> &mut Self::Model;

    fn log(&self) -> &EventLog;

    fn into_parts(self) -> (Self::Model, EventLog);

    /// Feeds a whole stream and returns the log.
    fn run<I>(&mut self, stream: I) -> Result<&EventLog>
    where
        I: IntoIterator<Item = MiniBatch<<Self::Model as ModelAdapter>::Item>>,
        Self: Sized,
    {
        for batch in stream {
            self.step(batch)?;
        }
        Ok(self.log())
    }
}

/// Cached parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<P> {
    /// Global step after whose update the snapshot was taken.
    pub time: u64,
    pub params: P,
}

/// Checkpoint-based sequential GLR detector over a model's prediction scores.
pub struct CheckpointDetector<M: ModelAdapter> {
    config: DetectorConfig,
    table: CalibrationTable,
    model: M,
    buffer: VecDeque<MiniBatch<M::Item>>,
    checkpoints: VecDeque<Checkpoint<M::Params>>,
    test_index: u32,
    /// Steps since the segment origin.
    t: u64,
    origin: u64,
    last_time: u64,
    scanner: SplitScanner,
    scores: Vec<f64>,
    log: EventLog,
}

impl<M: ModelAdapter> CheckpointDetector<M> {
    /// Validates the configuration against the table and caches the initial
    /// parameters as the time-0 checkpoint.
    pub fn new(config: DetectorConfig, table: CalibrationTable, model: M) -> Result<Self> {
        config.validate()?;
        table.check_matches(config.window, config.alpha)?;
        let mut det = Self {
            buffer: VecDeque::with_capacity(config.window),
            checkpoints: VecDeque::new(),
            scores: Vec::with_capacity(config.window),
            config,
            table,
            model,
            test_index: 0,
            t: 0,
            origin: 0,
            last_time: 0,
            scanner: SplitScanner::new(),
            log: EventLog::new(Method::Checkpoint),
        };
        det.cache_checkpoint();
        Ok(det)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn table(&self) -> &CalibrationTable {
        &self.table
    }

    pub fn stride(&self) -> u64 {
        self.config.stride() as u64
    }

    pub fn test_index(&self) -> u32 {
        self.test_index
    }

    /// Relative time since the segment origin.
    pub fn relative_time(&self) -> u64 {
        self.t
    }

    /// Global time of the segment origin.
    pub fn origin(&self) -> u64 {
        self.origin
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn checkpoints(&self) -> impl Iterator<Item = &Checkpoint<M::Params>> {
        self.checkpoints.iter()
    }

    pub fn num_checkpoints(&self) -> usize {
        self.checkpoints.len()
    }

    /// `ceil(T / D) + 1`.
    pub fn checkpoint_bound(&self) -> usize {
        self.config.window.div_ceil(self.config.stride()) + 1
    }

    fn cache_checkpoint(&mut self) {
        self.checkpoints.push_back(Checkpoint {
            time: self.origin + self.t,
            params: self.model.snapshot(),
        });
    }

    /// Forces a reset as if a changepoint had been declared at `tau`.
    /// The new origin is the current step.
    pub fn reset(&mut self, tau: u64, recover: bool) -> Result<()> {
        if recover {
            let cp = self
                .checkpoints
                .iter()
                .rev()
                .find(|c| c.time <= tau)
                .ok_or_else(|| Error::InvalidConfig(format!("no checkpoint at or before tau = {tau}")))?;
            let params = cp.params.clone();
            self.model.restore(&params);
        }
        self.model.start_segment()?;
        self.origin = self.last_time;
        self.t = 0;
        self.test_index = 0;
        self.buffer.clear();
        self.checkpoints.clear();
        self.cache_checkpoint();
        Ok(())
    }

    fn run_test(&mut self) -> Result<Option<ChangepointEvent>> {
        let cfg = &self.config;
        let window = cfg.window as u64;
        let cp_time = self.origin + self.t - window;
        let cp = self
            .checkpoints
            .front()
            .filter(|c| c.time == cp_time)
            .ok_or_else(|| Error::InvalidConfig(format!("missing checkpoint for time {cp_time}")))?;
        self.scores.clear();
        for batch in &self.buffer {
            let s = self.model.score(batch, &cp.params)?;
            if !s.is_finite() {
                return Err(Error::NonFinite("prediction score"));
            }
            self.scores.push(s);
        }
        let delta_i = error_schedule(cfg.delta, cfg.eta, self.test_index);
        let threshold = self.table.threshold_for(delta_i);
        let extrapolated = delta_i < self.table.min_delta() * (1.0 - 1e-12);
        let scan = self.scanner.scan(&self.scores, cfg.alpha, cfg.var_floor)?;
        let rejected = scan.z > threshold && scan.z > scan.extended_value;
        self.log.diagnostics.push(TestRecord {
            time: self.last_time,
            z: scan.z,
            threshold,
            delta_i: Some(delta_i),
            rejected,
            extrapolated,
        });
        if extrapolated && rejected {
            let msg = format!(
                "test {} at step {}: delta_i = {delta_i:e} below tabulated range, threshold extrapolated",
                self.test_index, self.last_time
            );
            log::warn!("{msg}");
            self.log.warnings.push(msg);
        }
        if !rejected {
            self.test_index += 1;
            self.checkpoints.pop_front();
            return Ok(None);
        }
        let window_start = cp_time + 1;
        let tau = cp_time + scan.c_star as u64;
        let event = ChangepointEvent {
            tau,
            z: scan.z,
            threshold,
            window_start,
            window_end: self.last_time,
            test_index: self.test_index,
            local_index: scan.c_star,
            detected_at: self.last_time,
        };
        self.log.events.push(event.clone());
        self.reset(tau, cfg.recover)?;
        Ok(Some(event))
    }
}

impl<M: ModelAdapter> OnlineDetector for CheckpointDetector<M> {
    type Model = M;

    fn step(&mut self, batch: MiniBatch<M::Item>) -> Result<Option<ChangepointEvent>> {
        if batch.time != self.last_time + 1 {
            return Err(Error::NonMonotoneStream {
                expected: self.last_time + 1,
                got: batch.time,
            });
        }
        self.model.update(&batch)?;
        if self.buffer.len() == self.config.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(batch);
        self.last_time += 1;
        self.t += 1;
        let d = self.stride();
        if self.t.is_multiple_of(d) {
            self.cache_checkpoint();
        }
        if self.t == self.test_index as u64 * d + self.config.window as u64 {
            return self.run_test();
        }
        Ok(None)
    }

    fn model(&self) -> &M {
        &self.model
    }

    fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    fn log(&self) -> &EventLog {
        &self.log
    }

    fn into_parts(self) -> (M, EventLog) {
        (self.model, self.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{MovingAverageModel, PassThrough};
    use crate::published;
    use crate::rng::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn singleton(t: u64, v: f64) -> MiniBatch<f64> {
        MiniBatch::new(t, vec![v]).unwrap()
    }

    fn pass_through(window: usize, alpha: usize, delta: f64) -> CheckpointDetector<PassThrough> {
        let cfg = DetectorConfig::with_window(window).alpha(alpha).delta(delta);
        CheckpointDetector::new(cfg, published::table(window, alpha).unwrap(), PassThrough).unwrap()
    }

    #[test]
    fn schedule_values() {
        assert!((error_schedule(1e-4, 0.99, 0) - 1e-6).abs() < 1e-18);
        assert!((error_schedule(1e-4, 0.99, 1) - 9.9e-7).abs() < 1e-18);
        let partial: f64 = (0..=1000).map(|i| error_schedule(1e-4, 0.99, i)).sum();
        assert!(partial < 1e-4);
        assert!(partial > 0.9999 * 1e-4);
    }

    #[test]
    fn stride_and_initial_checkpoint() {
        let d = pass_through(100, 25, 0.01);
        assert_eq!(d.stride(), 50);
        assert_eq!(d.num_checkpoints(), 1);
        assert_eq!(d.checkpoints().next().unwrap().time, 0);
        assert_eq!(pass_through(50, 12, 0.01).stride(), 26);
    }

    #[test]
    fn invalid_border_and_table_mismatch() {
        let cfg = DetectorConfig::with_window(100).alpha(50);
        let tbl = published::table(100, 25).unwrap();
        assert!(matches!(
            CheckpointDetector::new(cfg, tbl.clone(), PassThrough),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = DetectorConfig::with_window(100).alpha(20);
        assert!(matches!(
            CheckpointDetector::new(cfg, tbl, PassThrough),
            Err(Error::CalibrationMismatch { .. })
        ));
    }

    #[test]
    fn no_test_before_window_fills() {
        let mut d = pass_through(100, 25, 0.05);
        for t in 1..=99 {
            assert!(d
                .step(singleton(t, if t > 50 { 100.0 } else { 0.0 }))
                .unwrap()
                .is_none());
        }
        assert!(d.log().diagnostics.is_empty());
    }

    #[test]
    fn rejects_out_of_order_batches() {
        let mut d = pass_through(30, 7, 0.05);
        d.step(singleton(1, 0.0)).unwrap();
        assert_eq!(
            d.step(singleton(3, 0.0)),
            Err(Error::NonMonotoneStream { expected: 2, got: 3 })
        );
        assert!(d.step(singleton(1, 0.0)).is_err());
    }

    #[test]
    fn cadence_memory_and_thresholds() {
        let mut d = pass_through(100, 25, 0.05);
        let mut rng = seeded_rng(11);
        for t in 1..=3000 {
            d.step(singleton(t, rng.sample(StandardNormal))).unwrap();
            assert!(d.num_checkpoints() <= d.checkpoint_bound());
            assert!(d.buffer_len() <= 100);
            for c in d.checkpoints() {
                assert_eq!((c.time - d.origin()) % 50, 0);
            }
        }
        let diag = &d.log().diagnostics;
        let mut expected = 100;
        for rec in diag.iter() {
            assert_eq!(rec.time, expected);
            expected += 50;
        }
        for w in diag.windows(2) {
            assert!(w[1].threshold >= w[0].threshold);
            assert!(w[1].delta_i < w[0].delta_i);
        }
    }

    #[test]
    fn detects_step_and_resets() {
        let mut d = pass_through(100, 25, 0.01);
        let mut rng = seeded_rng(2);
        let mut events = Vec::new();
        for t in 1..=400 {
            let v: f64 = rng.sample(StandardNormal);
            if let Some(e) = d.step(singleton(t, v + if t >= 160 { 6.0 } else { 0.0 })).unwrap() {
                events.push(e);
            }
        }
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert!(e.tau.abs_diff(160) <= 2, "tau {}", e.tau);
        assert_eq!(e.window_end - e.window_start + 1, 100);
        assert_eq!(e.tau, e.window_start - 1 + e.local_index as u64);
        assert_eq!(d.origin(), e.detected_at);
        let after: Vec<_> = d.log().diagnostics.iter().filter(|r| r.time > e.detected_at).collect();
        assert_eq!(after[0].time, e.detected_at + 100);
        assert_eq!(after[0].delta_i, Some(error_schedule(0.01, 0.99, 0)));
    }

    // Parameters are a counter of updates, so restore reveals which snapshot was used.
    struct Counter(u64);

    impl ModelAdapter for Counter {
        type Item = f64;
        type Params = u64;
        fn update(&mut self, _b: &MiniBatch<f64>) -> Result<()> {
            self.0 += 1;
            Ok(())
        }
        fn snapshot(&self) -> u64 {
            self.0
        }
        fn restore(&mut self, p: &u64) {
            self.0 = *p;
        }
        fn item_scores(&self, b: &MiniBatch<f64>, _p: &u64) -> Result<Vec<f64>> {
            Ok(b.items.clone())
        }
    }

    fn counter_at(steps: u64) -> CheckpointDetector<Counter> {
        let cfg = DetectorConfig::with_window(100).delta(0.05);
        let mut d = CheckpointDetector::new(cfg, published::table(100, 25).unwrap(), Counter(0)).unwrap();
        let mut rng = seeded_rng(5);
        for t in 1..=steps {
            d.step(singleton(t, rng.sample(StandardNormal))).unwrap();
        }
        d
    }

    #[test]
    fn recovery_uses_nearest_left_checkpoint() {
        let mut d = counter_at(299);
        let times: Vec<u64> = d.checkpoints().map(|c| c.time).collect();
        assert_eq!(times, vec![200, 250]);
        d.reset(260, true).unwrap();
        assert_eq!(d.model().0, 250);
        assert_eq!(d.checkpoints().next().unwrap().time, 299);
        assert_eq!(d.checkpoints().next().unwrap().params, 250);

        let mut d = counter_at(299);
        d.reset(250, true).unwrap();
        assert_eq!(d.model().0, 250);

        let mut d = counter_at(299);
        d.reset(260, false).unwrap();
        assert_eq!(d.model().0, 299);
        assert_eq!(d.buffer_len(), 0);
        assert_eq!(d.test_index(), 0);
        assert_eq!(d.relative_time(), 0);
    }

    // Squared-error scores of single observations are far from normal, so the
    // stream carries ten observations per step.
    #[test]
    fn moving_average_scores_localize_shift() {
        let mut hits = 0;
        for seed in 0..10 {
            let cfg = DetectorConfig::with_window(50).delta(1e-3);
            let model = MovingAverageModel::new(0.0, 0.1);
            let mut d = CheckpointDetector::new(cfg, published::table(50, 12).unwrap(), model).unwrap();
            let mut rng = seeded_rng(100 + seed);
            for t in 1..=600u64 {
                let mu = if t >= 300 { 4.0 } else { 0.0 };
                let items = (0..10).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect();
                d.step(MiniBatch::new(t, items).unwrap()).unwrap();
            }
            let taus = d.log().taus();
            if taus.len() == 1 && taus[0].abs_diff(300) <= 5 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{hits}/10");
    }
}
