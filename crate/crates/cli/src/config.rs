//! Per-command configuration documents.
//!
//! A configuration resolves in three layers: the command's template, then the
//! `--config` file, then explicit flags. Fields without a default (seeds and
//! input paths) are absent from the template, so omitting them is an error.
//! The resolved document is what `--dump-config` prints, and feeding it back
//! through `--config` reproduces the run.

use std::path::{Path, PathBuf};

use cpdetect::baselines::{BaselineConfig, NigPrior, BAYESCD_CUTOFFS, SIMPLECD_CUTOFFS};
use cpdetect::cl::{LearnerConfig, TaskStreamSpec};
use cpdetect::simulate::MeanShiftSpec;
use cpdetect::{DetectorConfig, Method};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// A command configuration with template defaults.
pub trait CommandConfig: Serialize + DeserializeOwned {
    /// Dotted paths removed from the template; they must come from the file or a flag.
    const REQUIRED: &'static [&'static str];

    fn template() -> Self;

    /// Fills defaults that depend on other resolved fields.
    fn fill(_doc: &mut Value) {}

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

/// Dotted-path assignments collected from flags.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(&'static str, Value)>);

impl Overrides {
    pub fn set(&mut self, path: &'static str, value: Option<impl Serialize>) -> &mut Self {
        if let Some(v) = value {
            self.0
                .push((path, serde_json::to_value(v).expect("flag value serializes")));
        }
        self
    }
}

pub fn get_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |v, key| v.get(key))
}

pub fn set_path(doc: &mut Value, path: &str, value: Value) {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().expect("non-empty path");
    let mut cur = doc;
    for key in keys {
        if !cur.get(key).is_some_and(Value::is_object) {
            cur[key] = Value::Object(Map::new());
        }
        cur = &mut cur[key];
    }
    cur[last] = value;
}

fn remove_path(doc: &mut Value, path: &str) {
    let (parent, last) = match path.rsplit_once('.') {
        Some((p, l)) => (p, l),
        None => ("", path),
    };
    let target = if parent.is_empty() {
        Some(doc)
    } else {
        parent.split('.').try_fold(doc, |v, key| v.get_mut(key))
    };
    if let Some(Value::Object(m)) = target {
        m.remove(last);
    }
}

/// Objects merge key by key; every other value replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads `path` as a JSON value, or fails with a usage error naming it.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn resolve<C: CommandConfig>(file: Option<&Path>, overrides: &Overrides) -> Result<C> {
    let mut doc = serde_json::to_value(C::template()).expect("template serializes");
    for path in C::REQUIRED {
        remove_path(&mut doc, path);
    }
    if let Some(path) = file {
        merge(&mut doc, read_config_file(path)?);
    }
    for (path, value) in &overrides.0 {
        set_path(&mut doc, path, value.clone());
    }
    C::fill(&mut doc);
    let config: C = serde_json::from_value(doc).map_err(|e| {
        let msg = e.to_string();
        match msg.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            Some(field) => CliError::Usage(format!(
                "missing `{field}`: pass --{} or set it in the config file",
                field.replace('_', "-")
            )),
            None => CliError::Usage(format!("invalid configuration: {msg}")),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn to_pretty_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document serializes");
    s.push('\n');
    s
}

fn fill_alpha(doc: &mut Value, window: &str, alpha: &str) {
    if get_path(doc, alpha).is_none() {
        if let Some(t) = get_path(doc, window).and_then(Value::as_u64) {
            set_path(doc, alpha, Value::from(t / 4));
        }
    }
}

fn method_of(doc: &Value) -> Method {
    get_path(doc, "method")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or(Method::Checkpoint)
}

fn default_cutoffs(method: Method) -> Vec<f64> {
    match method {
        Method::Simplecd => SIMPLECD_CUTOFFS.to_vec(),
        _ => BAYESCD_CUTOFFS.to_vec(),
    }
}

/// Baseline settings apart from the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSettings {
    pub min_distance: u64,
    pub hazard: f64,
    pub prior: NigPrior,
    pub prune_mass: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        let b = BaselineConfig::new(0.5);
        Self {
            min_distance: b.min_distance,
            hazard: b.hazard,
            prior: b.prior,
            prune_mass: b.prune_mass,
        }
    }
}

impl BaselineSettings {
    pub fn with_cutoff(&self, cutoff: f64) -> BaselineConfig {
        BaselineConfig {
            cutoff,
            min_distance: self.min_distance,
            hazard: self.hazard,
            prior: self.prior,
            prune_mass: self.prune_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub window: usize,
    pub alpha: usize,
    pub n_sims: usize,
    pub seed: u64,
    pub deltas: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl CommandConfig for CalibrateConfig {
    const REQUIRED: &'static [&'static str] = &["seed", "alpha"];

    fn template() -> Self {
        Self {
            window: 100,
            alpha: 25,
            n_sims: 1_000_000,
            seed: 0,
            deltas: vec![0.1, 0.05, 0.01, 0.001],
            out: None,
        }
    }

    fn fill(doc: &mut Value) {
        fill_alpha(doc, "window", "alpha");
    }
}

/// Model trained on the raw observations before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// The observations are the scores.
    Identity,
    /// Squared error of a moving-average mean tracker.
    MovingAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingAverageSettings {
    pub rho: f64,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    pub scores: PathBuf,
    pub method: Method,
    pub model: ModelKind,
    pub moving_average: MovingAverageSettings,
    pub detector: DetectorConfig,
    /// Calibration table file; the bundled reference table is used when absent.
    pub table: Option<PathBuf>,
    /// Baseline cutoff.
    pub cutoff: f64,
    pub baseline: BaselineSettings,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl CommandConfig for DetectConfig {
    const REQUIRED: &'static [&'static str] = &["scores", "detector.alpha", "cutoff"];

    fn template() -> Self {
        Self {
            scores: PathBuf::new(),
            method: Method::Checkpoint,
            model: ModelKind::Identity,
            moving_average: MovingAverageSettings { rho: 0.1, theta0: 0.0 },
            detector: DetectorConfig::with_window(100),
            table: None,
            cutoff: 0.0,
            baseline: BaselineSettings::default(),
            out: None,
            plot: None,
        }
    }

    fn fill(doc: &mut Value) {
        fill_alpha(doc, "detector.window", "detector.alpha");
        if get_path(doc, "cutoff").is_none() {
            let c = match method_of(doc) {
                Method::Simplecd => 4.0,
                _ => 0.5,
            };
            set_path(doc, "cutoff", Value::from(c));
        }
    }

    fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        if self.method != Method::Checkpoint {
            self.baseline.with_cutoff(self.cutoff).validate(self.method)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanShiftConfig {
    pub series: MeanShiftSpec,
    /// Score CSV destination; stdout when absent.
    pub out: Option<PathBuf>,
    /// True changepoint CSV destination.
    pub truth: Option<PathBuf>,
}

impl CommandConfig for MeanShiftConfig {
    const REQUIRED: &'static [&'static str] = &["series.seed"];

    fn template() -> Self {
        Self {
            series: MeanShiftSpec::default(),
            out: None,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClTasksConfig {
    pub stream: TaskStreamSpec,
    pub out: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

impl CommandConfig for ClTasksConfig {
    const REQUIRED: &'static [&'static str] = &["stream.seed"];

    fn template() -> Self {
        Self {
            stream: TaskStreamSpec::new(10, 20, 0),
            out: None,
            truth: None,
        }
    }

    fn validate(&self) -> Result<()> {
        Ok(self.stream.validate()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClRunConfig {
    pub stream: TaskStreamSpec,
    pub learner: LearnerConfig,
    pub method: Method,
    /// Checkpoint detector settings; `recover` restores the pre-change checkpoint.
    pub detector: DetectorConfig,
    pub table: Option<PathBuf>,
    /// Baseline cutoffs swept; the best Jaccard is reported.
    pub cutoffs: Vec<f64>,
    pub baseline: BaselineSettings,
    pub tolerance: u64,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl CommandConfig for ClRunConfig {
    const REQUIRED: &'static [&'static str] = &["stream.seed", "learner.seed", "detector.alpha", "cutoffs"];

    fn template() -> Self {
        Self {
            stream: TaskStreamSpec::new(10, 20, 0),
            learner: LearnerConfig::new(0),
            method: Method::Checkpoint,
            detector: DetectorConfig::with_window(100).recover(true),
            table: None,
            cutoffs: Vec::new(),
            baseline: BaselineSettings::default(),
            tolerance: 5,
            out: None,
            plot: None,
        }
    }

    fn fill(doc: &mut Value) {
        fill_alpha(doc, "detector.window", "detector.alpha");
        if get_path(doc, "learner.seed").is_none() {
            if let Some(seed) = get_path(doc, "stream.seed").cloned() {
                set_path(doc, "learner.seed", seed);
            }
        }
        if get_path(doc, "cutoffs").is_none() {
            let grid = default_cutoffs(method_of(doc));
            set_path(doc, "cutoffs", serde_json::to_value(grid).expect("grid serializes"));
        }
    }

    fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.detector.validate()?;
        if self.method != Method::Checkpoint {
            if self.cutoffs.is_empty() {
                return Err(CliError::Usage("empty cutoff grid".into()));
            }
            for &c in &self.cutoffs {
                self.baseline.with_cutoff(c).validate(self.method)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// CSV with a single `t` column.
    pub truth: PathBuf,
    /// Event log JSON, or a CSV with a single `t` column.
    pub detected: PathBuf,
    pub tolerance: u64,
    pub out: Option<PathBuf>,
}

impl CommandConfig for EvaluateConfig {
    const REQUIRED: &'static [&'static str] = &["truth", "detected"];

    fn template() -> Self {
        Self {
            truth: PathBuf::new(),
            detected: PathBuf::new(),
            tolerance: 5,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalityConfig {
    pub scores: PathBuf,
    /// Test every score rather than the per-step batch means.
    pub per_item: bool,
    pub out: Option<PathBuf>,
}

impl CommandConfig for NormalityConfig {
    const REQUIRED: &'static [&'static str] = &["scores"];

    fn template() -> Self {
        Self {
            scores: PathBuf::new(),
            per_item: false,
            out: None,
        }
    }
}
