//! Continual learning with detected task boundaries: synthetic Gaussian-cluster
//! task streams, a replay-buffered multi-head learner, and the driver loop that
//! spawns a head and freezes a replay buffer at every detection.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BayesCd, SimpleCd};
use crate::calibration::CalibrationTable;
use crate::detector::{CheckpointDetector, EventLog, OnlineDetector, TestRecord};
use crate::error::{Error, Result};
use crate::eval::{match_changepoints, MatchResult};
use crate::models::{ModelAdapter, MultiHeadClassifier, MultiHeadParams};
use crate::rng::{seeded_rng, seeded_stream};
use crate::types::{DetectorConfig, LabeledExample, MiniBatch, SCORE_JITTER};

fn default_min_segment() -> usize {
    500
}

fn default_cp_prob() -> f64 {
    0.005
}

/// Synthetic task stream: each task has its own class means; labels are
/// always `0..C` so the label alone does not reveal the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskStreamSpec {
    pub num_tasks: usize,
    pub batch: usize,
    pub input_dim: usize,
    pub classes: usize,
    #[serde(default = "default_min_segment")]
    pub min_segment: usize,
    #[serde(default = "default_cp_prob")]
    pub cp_prob: f64,
    /// Standard deviation of the class means around the origin.
    pub spread: f64,
    pub noise: f64,
    pub seed: u64,
}

impl TaskStreamSpec {
    pub fn new(num_tasks: usize, batch: usize, seed: u64) -> Self {
        Self {
            num_tasks,
            batch,
            input_dim: 8,
            classes: 3,
            min_segment: default_min_segment(),
            cp_prob: default_cp_prob(),
            spread: 3.0,
            noise: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 || self.batch == 0 || self.input_dim == 0 || self.classes < 2 {
            return Err(Error::InvalidConfig(
                "task stream needs num_tasks, batch, input_dim >= 1 and classes >= 2".into(),
            ));
        }
        if !(self.cp_prob > 0.0 && self.cp_prob <= 1.0) {
            return Err(Error::ProbabilityOutOfRange(self.cp_prob));
        }
        if !(self.spread > 0.0 && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(
                "spread must be positive and noise non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Batches at times `1..=n`, the first time of every task after the first,
/// and the per-task class means.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub batches: Vec<MiniBatch<LabeledExample>>,
    pub changepoints: Vec<u64>,
    pub segment_lengths: Vec<usize>,
    pub class_means: Vec<Vec<Vec<f64>>>,
}

impl TaskStream {
    /// Fresh batches of task `task`, for held-out evaluation.
    pub fn sample_task(&self, spec: &TaskStreamSpec, task: usize, n: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| draw_example(&mut rng, &self.class_means[task], spec.noise))
            .collect()
    }
}

fn draw_example<R: Rng>(rng: &mut R, means: &[Vec<f64>], noise: f64) -> LabeledExample {
    let label = rng.random_range(0..means.len());
    let x = means[label]
        .iter()
        .map(|m| m + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    LabeledExample::new(x, label)
}

/// Segment length `min_segment + G` with `G` geometric on `{1, 2, ...}`.
pub fn segment_length<R: Rng>(rng: &mut R, min_segment: usize, cp_prob: f64) -> Result<usize> {
    let g = Geometric::new(cp_prob).map_err(|_| Error::ProbabilityOutOfRange(cp_prob))?;
    Ok(min_segment + 1 + g.sample(rng) as usize)
}

pub fn make_task_stream(spec: &TaskStreamSpec) -> Result<TaskStream> {
    spec.validate()?;
    let mut layout = seeded_stream(spec.seed, 0);
    let mut data = seeded_stream(spec.seed, 1);
    let mut batches = Vec::new();
    let mut changepoints = Vec::new();
    let mut segment_lengths = Vec::with_capacity(spec.num_tasks);
    let mut class_means = Vec::with_capacity(spec.num_tasks);
    let mut time = 0u64;
    for k in 0..spec.num_tasks {
        let means: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| {
                (0..spec.input_dim)
                    .map(|_| spec.spread * layout.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let len = segment_length(&mut layout, spec.min_segment, spec.cp_prob)?;
        if k > 0 {
            changepoints.push(time + 1);
        }
        for _ in 0..len {
            time += 1;
            let items = (0..spec.batch)
                .map(|_| draw_example(&mut data, &means, spec.noise))
                .collect();
            batches.push(MiniBatch { time, items });
        }
        segment_lengths.push(len);
        class_means.push(means);
    }
    Ok(TaskStream {
        batches,
        changepoints,
        segment_lengths,
        class_means,
    })
}

/// A frozen sample of one task's data, scored under head `head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub head: usize,
    pub items: Vec<LabeledExample>,
}

/// Uniform subsample of `size` examples without replacement; all of `pool`
/// when it is smaller. The flag reports the short pool.
pub fn build_replay_buffer<R: Rng>(
    pool: &[LabeledExample],
    size: usize,
    head: usize,
    rng: &mut R,
) -> (ReplayBuffer, bool) {
    let short = pool.len() < size;
    let items = if short {
        pool.to_vec()
    } else {
        let mut idx = sample(rng, pool.len(), size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i].clone()).collect()
    };
    (ReplayBuffer { head, items }, short)
}

fn default_hidden() -> usize {
    16
}

fn default_rho() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    1.0
}

fn default_buffer_size() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_buffer_size")]
    pub buffer_size: usize,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            hidden: default_hidden(),
            rho: default_rho(),
            lambda: default_lambda(),
            buffer_size: default_buffer_size(),
            seed,
        }
    }
}

/// Multi-head classifier plus the bookkeeping of past tasks.
///
/// Scores are `ln(-ln p(label) + eps)` under the newest head of the scoring
/// parameters. `start_segment` freezes a replay buffer of the finished task
/// from its first `ceil(buffer_size / b)` batches and spawns a zero head.
#[derive(Debug, Clone)]
pub struct ContinualLearner {
    pub classifier: MultiHeadClassifier,
    pub buffers: Vec<ReplayBuffer>,
    buffer_size: usize,
    pool: Vec<LabeledExample>,
    pool_batches: usize,
    pool_seen: usize,
    seed: u64,
    eps: f64,
    pub warnings: Vec<String>,
}

impl ContinualLearner {
    pub fn new(input_dim: usize, classes: usize, cfg: &LearnerConfig) -> Result<Self> {
        Ok(Self {
            classifier: MultiHeadClassifier::new(input_dim, cfg.hidden, classes, cfg.rho, cfg.lambda, cfg.seed)?,
            buffers: Vec::new(),
            buffer_size: cfg.buffer_size,
            pool: Vec::new(),
            pool_batches: 0,
            pool_seen: 0,
            seed: cfg.seed,
            eps: SCORE_JITTER,
            warnings: Vec::new(),
        })
    }

    pub fn num_heads(&self) -> usize {
        self.classifier.num_heads()
    }

    /// Mean score of `items` under head `head` of the live parameters.
    pub fn head_score(&self, items: Vec<LabeledExample>, head: usize) -> Result<f64> {
        self.classifier.score(&MiniBatch::new(1, items)?, head, self.eps)
    }
}

impl ModelAdapter for ContinualLearner {
    type Item = LabeledExample;
    type Params = MultiHeadParams;

    fn update(&mut self, batch: &MiniBatch<LabeledExample>) -> Result<()> {
        if self.pool_seen == 0 {
            self.pool_batches = self.buffer_size.div_ceil(batch.len().max(1));
        }
        if self.pool_seen < self.pool_batches {
            self.pool.extend(batch.items.iter().cloned());
            self.pool_seen += 1;
        }
        let head = self.classifier.current_head();
        self.classifier.update(batch, head, &self.buffers)
    }

    fn snapshot(&self) -> MultiHeadParams {
        self.classifier.params.clone()
    }

    fn restore(&mut self, params: &MultiHeadParams) {
        self.classifier.params = params.clone();
    }

    fn item_scores(&self, batch: &MiniBatch<LabeledExample>, params: &MultiHeadParams) -> Result<Vec<f64>> {
        MultiHeadClassifier::item_scores_with(params, batch, params.heads.len() - 1, self.eps)
    }

    fn start_segment(&mut self) -> Result<()> {
        let head = self.classifier.current_head();
        let mut rng = seeded_stream(self.seed, 1 + head as u64);
        let (buffer, short) = build_replay_buffer(&self.pool, self.buffer_size, head, &mut rng);
        if short {
            let msg = format!(
                "replay buffer for head {head} holds {} of {} examples",
                buffer.items.len(),
                self.buffer_size
            );
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
        self.buffers.push(buffer);
        self.classifier.spawn_head();
        self.pool.clear();
        self.pool_seen = 0;
        Ok(())
    }
}

/// Detector driving the continual-learning loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum DetectorChoice {
    Checkpoint { config: DetectorConfig },
    Bayescd { config: BaselineConfig },
    Simplecd { config: BaselineConfig },
}

impl DetectorChoice {
    /// The checkpoint detector with recovery enabled.
    pub fn checkpoint(window: usize, delta: f64) -> Self {
        DetectorChoice::Checkpoint {
            config: DetectorConfig::with_window(window).delta(delta).recover(true),
        }
    }
}

/// Everything a continual-learning run produces.
#[derive(Debug, Clone)]
pub struct ClOutcome {
    pub learner: ContinualLearner,
    pub detected: Vec<u64>,
    pub log: EventLog,
    pub metrics: MatchResult,
}

impl ClOutcome {
    pub fn buffers(&self) -> &[ReplayBuffer] {
        &self.learner.buffers
    }

    pub fn report(&self, true_cps: &[u64]) -> ClReport {
        ClReport {
            method: self.log.method.to_string(),
            true_cps: true_cps.to_vec(),
            detected_cps: self.detected.clone(),
            jaccard: self.metrics.jaccard,
            precision: self.metrics.precision,
            recall: self.metrics.recall,
            heads: self.learner.num_heads(),
            per_test_diagnostics: self.log.diagnostics.clone(),
        }
    }
}

/// Serializable summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClReport {
    pub method: String,
    pub true_cps: Vec<u64>,
    pub detected_cps: Vec<u64>,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
    pub heads: usize,
    pub per_test_diagnostics: Vec<TestRecord>,
}

fn drive<D: OnlineDetector<Model = ContinualLearner>>(
    mut det: D,
    stream: &TaskStream,
    tolerance: u64,
) -> Result<ClOutcome> {
    for batch in &stream.batches {
        det.step(batch.clone())?;
        debug_assert_eq!(det.model().num_heads(), det.log().events.len() + 1);
    }
    let (learner, log) = det.into_parts();
    let detected = log.taus();
    let metrics = match_changepoints(&stream.changepoints, &detected, tolerance)?;
    Ok(ClOutcome {
        learner,
        detected,
        log,
        metrics,
    })
}

/// Runs one detector over the stream and scores its changepoints with
/// matching tolerance `tolerance`. `table` is required for the checkpoint
/// detector.
pub fn run_continual(
    spec: &TaskStreamSpec,
    stream: &TaskStream,
    choice: &DetectorChoice,
    learner: &LearnerConfig,
    table: Option<&CalibrationTable>,
    tolerance: u64,
) -> Result<ClOutcome> {
    let model = ContinualLearner::new(spec.input_dim, spec.classes, learner)?;
    match choice {
        DetectorChoice::Checkpoint { config } => {
            if spec.min_segment < config.window {
                return Err(Error::InvalidConfig(format!(
                    "min_segment {} shorter than the window {}",
                    spec.min_segment, config.window
                )));
            }
            let table =
                table.ok_or_else(|| Error::InvalidConfig("checkpoint detector needs a calibration table".into()))?;
            drive(
                CheckpointDetector::new(config.clone(), table.clone(), model)?,
                stream,
                tolerance,
            )
        }
        DetectorChoice::Bayescd { config } => drive(BayesCd::new(model, config.clone())?, stream, tolerance),
        DetectorChoice::Simplecd { config } => drive(SimpleCd::new(model, config.clone())?, stream, tolerance),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::published;

    fn small_spec(num_tasks: usize, seed: u64) -> TaskStreamSpec {
        TaskStreamSpec {
            min_segment: 150,
            cp_prob: 0.02,
            ..TaskStreamSpec::new(num_tasks, 10, seed)
        }
    }

    #[test]
    fn single_task_has_no_changepoints() {
        let s = make_task_stream(&small_spec(1, 0)).unwrap();
        assert!(s.changepoints.is_empty());
        assert_eq!(s.batches.len(), s.segment_lengths[0]);
    }

    #[test]
    fn certain_changepoint_gives_minimum_length() {
        let spec = TaskStreamSpec {
            cp_prob: 1.0,
            min_segment: 20,
            ..small_spec(5, 1)
        };
        let s = make_task_stream(&spec).unwrap();
        assert!(s.segment_lengths.iter().all(|&l| l == 21));
        assert_eq!(s.changepoints, vec![22, 43, 64, 85]);
        assert!(s.batches.iter().enumerate().all(|(i, b)| b.time == i as u64 + 1));
    }

    #[test]
    fn segment_length_mean() {
        let mut rng = seeded_rng(9);
        let n = 1000;
        let total: usize = (0..n).map(|_| segment_length(&mut rng, 500, 0.005).unwrap()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 700.0).abs() <= 0.05 * 700.0, "{mean}");
    }

    #[test]
    fn labels_stay_in_range_and_stream_is_deterministic() {
        let spec = small_spec(3, 4);
        let a = make_task_stream(&spec).unwrap();
        assert!(a
            .batches
            .iter()
            .flat_map(|b| &b.items)
            .all(|e| e.label < 3 && e.x.len() == 8));
        assert_eq!(a, make_task_stream(&spec).unwrap());
    }

    #[test]
    fn replay_buffer_sizes_and_determinism() {
        let pool: Vec<LabeledExample> = (0..500).map(|i| LabeledExample::new(vec![i as f64], i % 3)).collect();
        let (all, short) = build_replay_buffer(&pool[..100], 100, 0, &mut seeded_rng(0));
        assert!(!short);
        assert_eq!(all.items, pool[..100].to_vec());
        let (b, _) = build_replay_buffer(&pool, 100, 2, &mut seeded_rng(1));
        assert_eq!(b.items.len(), 100);
        assert_eq!(b.head, 2);
        let mut xs: Vec<i64> = b.items.iter().map(|e| e.x[0] as i64).collect();
        xs.dedup();
        assert_eq!(xs.len(), 100);
        assert!(b.items.iter().all(|e| pool.contains(e)));
        assert_eq!(b, build_replay_buffer(&pool, 100, 2, &mut seeded_rng(1)).0);
        let (few, short) = build_replay_buffer(&pool[..40], 100, 0, &mut seeded_rng(0));
        assert!(short);
        assert_eq!(few.items.len(), 40);
    }

    #[test]
    fn learner_start_segment_bookkeeping() {
        let spec = small_spec(2, 5);
        let s = make_task_stream(&spec).unwrap();
        let mut m = ContinualLearner::new(8, 3, &LearnerConfig::new(0)).unwrap();
        for b in &s.batches[..30] {
            m.update(b).unwrap();
        }
        m.start_segment().unwrap();
        assert_eq!(m.num_heads(), 2);
        assert_eq!(m.buffers.len(), 1);
        assert_eq!(m.buffers[0].items.len(), 100);
        let pool: Vec<&LabeledExample> = s.batches[..10].iter().flat_map(|b| &b.items).collect();
        assert!(m.buffers[0].items.iter().all(|e| pool.contains(&e)));
    }

    #[test]
    fn heads_track_detections_and_buffers_freeze() {
        let spec = small_spec(3, 6);
        let stream = make_task_stream(&spec).unwrap();
        let choice = DetectorChoice::checkpoint(100, 1e-4);
        let table = published::table(100, 25).unwrap();
        let out = run_continual(&spec, &stream, &choice, &LearnerConfig::new(1), Some(&table), 5).unwrap();
        assert_eq!(out.learner.num_heads(), out.detected.len() + 1);
        assert_eq!(out.buffers().len(), out.detected.len());
        for w in out.log.events.windows(2) {
            assert!(w[1].detected_at - w[0].detected_at >= 100);
            assert!(w[1].tau > w[0].tau);
        }
    }

    #[test]
    fn checkpoint_choice_requires_table_and_long_segments() {
        let spec = small_spec(2, 0);
        let stream = make_task_stream(&spec).unwrap();
        let choice = DetectorChoice::checkpoint(100, 1e-4);
        assert!(run_continual(&spec, &stream, &choice, &LearnerConfig::new(0), None, 5).is_err());
        let short = TaskStreamSpec {
            min_segment: 50,
            ..spec
        };
        let table = published::table(100, 25).unwrap();
        assert!(run_continual(&short, &stream, &choice, &LearnerConfig::new(0), Some(&table), 5).is_err());
    }

    #[test]
    fn choice_round_trips_as_json() {
        let c = DetectorChoice::checkpoint(100, 1e-4);
        let j = serde_json::to_string(&c).unwrap();
        assert!(j.contains("\"method\":\"checkpoint\""));
        assert_eq!(serde_json::from_str::<DetectorChoice>(&j).unwrap(), c);
    }
}
