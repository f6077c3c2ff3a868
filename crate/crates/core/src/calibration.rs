//! Monte Carlo thresholds for the GLR statistic.
//!
//! `Z` is location-scale invariant, so its null distribution for a window of
//! i.i.d. Gaussians depends only on `(T, alpha)` and can be simulated with
//! standard normals. Thresholds `h(delta)` are nearest-rank quantiles of the
//! simulated sample, and a line in `log10(1/delta)` covers the deltas between
//! and beyond the tabulated ones.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glr::SplitScanner;
use crate::rng::{seeded_stream, RNG_NAME};
use crate::types::VARIANCE_FLOOR;

/// Samples per RNG stream. Fixed so results do not depend on worker count.
const BLOCK: usize = 4096;

/// Deltas tabulated by default.
pub const DEFAULT_DELTAS: [f64; 7] = [0.1, 0.05, 0.01, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileEntry {
    pub delta: f64,
    pub h: f64,
}

/// `h ~ intercept + slope * log10(1/delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdFit {
    pub slope: f64,
    pub intercept: f64,
}

impl ThresholdFit {
    pub fn eval(&self, delta: f64) -> f64 {
        self.intercept + self.slope * (1.0 / delta).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTable {
    #[serde(rename = "T")]
    pub window: usize,
    pub alpha: usize,
    pub n_sims: u64,
    pub seed: u64,
    pub rng_name: String,
    /// Sorted by descending delta.
    pub entries: Vec<QuantileEntry>,
    pub fit: ThresholdFit,
}

/// Null samples of `max(Z, extended value)` for windows of `window`
/// standard normals.
///
/// The offline test rejects iff `Z > h` and `Z > extended value`, which is
/// `max(Z, extended value) > h` together with `Z > extended value`, so this
/// maximum is the quantity the threshold is applied to.
///
/// Sample `k` is drawn from ChaCha8 stream `k / 4096` of `seed`, so the
/// sequence is the same however the blocks are spread over threads.
pub fn simulate_null_z(window: usize, alpha: usize, n_sims: usize, seed: u64) -> Result<Vec<f64>> {
    if n_sims == 0 {
        return Err(Error::InvalidConfig("n_sims must be at least 1".into()));
    }
    if alpha == 0 || 2 * alpha >= window {
        return Err(Error::EmptyCandidateSet { window, alpha });
    }
    let blocks = n_sims.div_ceil(BLOCK);
    let chunks: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(n_sims - b * BLOCK);
            let mut rng = seeded_stream(seed, b as u64);
            let mut scanner = SplitScanner::new();
            let mut buf = vec![0.0; window];
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                for x in buf.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                let r = scanner
                    .scan(&buf, alpha, VARIANCE_FLOOR)
                    .expect("border validated above");
                out.push(r.z.max(r.extended_value));
            }
            out
        })
        .collect();
    Ok(chunks.concat())
}

/// Nearest-rank `(1 - delta)` quantiles: the order statistic at rank
/// `ceil(n (1 - delta))`.
pub fn quantile_table(samples: &[f64], deltas: &[f64]) -> Result<Vec<QuantileEntry>> {
    if samples.is_empty() {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    let mut deltas = deltas.to_vec();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();

    let mut entries = Vec::with_capacity(deltas.len());
    for delta in deltas {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta = {delta} not in (0,1)")));
        }
        if (n as f64) * delta < 1.0 - 1e-9 {
            return Err(Error::InsufficientSimulations { delta, n_sims: n });
        }
        let rank = nearest_rank(n, delta);
        entries.push(QuantileEntry {
            delta,
            h: sorted[rank - 1],
        });
    }
    Ok(entries)
}

fn nearest_rank(n: usize, delta: f64) -> usize {
    let x = n as f64 * (1.0 - delta);
    // Products like 100 * 0.95 land a hair off the integer.
    let r = if (x - x.round()).abs() < 1e-9 * x.max(1.0) {
        x.round()
    } else {
        x.ceil()
    };
    (r as usize).clamp(1, n)
}

/// Ordinary least squares of `h` on `log10(1/delta)`.
pub fn fit_threshold(entries: &[QuantileEntry]) -> Result<ThresholdFit> {
    if entries.len() < 2 {
        return Err(Error::NotEnoughSamples {
            needed: 2,
            got: entries.len(),
        });
    }
    let n = entries.len() as f64;
    let xs: Vec<f64> = entries.iter().map(|e| (1.0 / e.delta).log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = entries.iter().map(|e| e.h).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, e) in xs.iter().zip(entries) {
        sxy += (x - mx) * (e.h - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("threshold fit needs two distinct deltas".into()));
    }
    let slope = sxy / sxx;
    Ok(ThresholdFit {
        slope,
        intercept: my - slope * mx,
    })
}

impl CalibrationTable {
    /// Simulates, tabulates and fits in one go.
    pub fn calibrate(window: usize, alpha: usize, n_sims: usize, seed: u64, deltas: &[f64]) -> Result<Self> {
        let samples = simulate_null_z(window, alpha, n_sims, seed)?;
        Self::from_samples(window, alpha, &samples, seed, deltas)
    }

    pub fn from_samples(window: usize, alpha: usize, samples: &[f64], seed: u64, deltas: &[f64]) -> Result<Self> {
        let entries = quantile_table(samples, deltas)?;
        let fit = fit_threshold(&entries)?;
        Ok(Self {
            window,
            alpha,
            n_sims: samples.len() as u64,
            seed,
            rng_name: RNG_NAME.to_string(),
            entries,
            fit,
        })
    }

    /// Build a table from already-known quantiles.
    pub fn from_entries(window: usize, alpha: usize, mut entries: Vec<QuantileEntry>) -> Result<Self> {
        entries.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        let fit = fit_threshold(&entries)?;
        let table = Self {
            window,
            alpha,
            n_sims: 0,
            seed: 0,
            rng_name: String::new(),
            entries,
            fit,
        };
        table.validate()?;
        Ok(table)
    }

    /// Threshold for `delta`: the tabulated value when `delta` is an entry,
    /// the fitted line otherwise. Never negative.
    pub fn threshold_for(&self, delta: f64) -> f64 {
        let h = self
            .entries
            .iter()
            .find(|e| ((e.delta - delta) / e.delta).abs() <= 1e-12)
            .map(|e| e.h)
            .unwrap_or_else(|| self.fit.eval(delta));
        h.max(0.0)
    }

    /// Smallest tabulated delta; thresholds below it are extrapolated.
    pub fn min_delta(&self) -> f64 {
        self.entries.last().map(|e| e.delta).unwrap_or(1.0)
    }

    pub fn check_matches(&self, window: usize, alpha: usize) -> Result<()> {
        if self.window != window || self.alpha != alpha {
            return Err(Error::CalibrationMismatch {
                table_window: self.window,
                table_alpha: self.alpha,
                window,
                alpha,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha == 0 || 2 * self.alpha >= self.window {
            return Err(Error::EmptyCandidateSet {
                window: self.window,
                alpha: self.alpha,
            });
        }
        if self.entries.is_empty() {
            return Err(Error::InvalidConfig("calibration table has no entries".into()));
        }
        for e in &self.entries {
            if !(e.delta > 0.0 && e.delta < 1.0) || !e.h.is_finite() {
                return Err(Error::InvalidConfig(format!("bad table entry {e:?}")));
            }
        }
        for (i, w) in self.entries.windows(2).enumerate() {
            if !(w[0].delta > w[1].delta && w[0].h < w[1].h) {
                return Err(Error::InvalidConfig(format!(
                    "table entries must have decreasing delta and increasing h (entry {})",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let table: Self =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("calibration table: {e}")))?;
        table.validate()?;
        Ok(table)
    }
}
