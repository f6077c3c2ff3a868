use thiserror::Error;

/// Errors raised by the detection toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty segment")]
    EmptySegment,

    #[error("probability out of range: {0}")]
    ProbabilityOutOfRange(f64),

    #[error("degenerate split: c = {c} for window of length {len}")]
    DegenerateSplit { c: usize, len: usize },

    #[error("empty candidate set: window {window}, border {alpha}")]
    EmptyCandidateSet { window: usize, alpha: usize },

    #[error(
        "calibration mismatch: table is for (T={table_window}, alpha={table_alpha}), got (T={window}, alpha={alpha})"
    )]
    CalibrationMismatch {
        table_window: usize,
        table_alpha: usize,
        window: usize,
        alpha: usize,
    },

    #[error("insufficient simulations for delta {delta}: n_sims = {n_sims}")]
    InsufficientSimulations { delta: f64, n_sims: usize },

    #[error("non-monotone stream: expected time {expected}, got {got}")]
    NonMonotoneStream { expected: u64, got: u64 },

    #[error("unknown head {head} (model has {heads} heads)")]
    UnknownHead { head: usize, heads: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Welch test needs per-item scores (at least 2 per sample, got {0})")]
    TooFewItems(usize),

    #[error("sequence is not strictly increasing at position {0}")]
    Unsorted(usize),

    #[error("need at least {needed} samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
