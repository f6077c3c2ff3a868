//! Bayesian online changepoint detection on a scalar score stream with a
//! Normal-Inverse-Gamma prior and a constant hazard.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Normal-Inverse-Gamma hyperparameters `(mu, kappa, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NigPrior {
    pub mu0: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            kappa: 1.0,
            alpha: 0.1,
            beta: 1.0,
        }
    }
}

/// Posterior sufficient statistics of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigStats {
    pub n: usize,
    pub kappa: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigStats {
    fn from_prior(p: &NigPrior) -> Self {
        Self {
            n: 0,
            kappa: p.kappa,
            mu: p.mu0,
            alpha: p.alpha,
            beta: p.beta,
        }
    }

    fn absorb(&self, v: f64) -> Self {
        let k = self.kappa + 1.0;
        let d = v - self.mu;
        Self {
            n: self.n + 1,
            kappa: k,
            mu: (self.kappa * self.mu + v) / k,
            alpha: self.alpha + 0.5,
            beta: self.beta + self.kappa * d * d / (2.0 * k),
        }
    }

    fn predictive_scale(&self) -> f64 {
        (self.beta * (self.kappa + 1.0) / (self.alpha * self.kappa)).sqrt()
    }
}

/// Student-t log density with `df` degrees of freedom.
pub fn student_t_ln_pdf(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

/// Weights over run lengths with per-run statistics. Index `r` is the run
/// that has grown `r` times since it was opened.
#[derive(Debug, Clone)]
pub struct RunLengthPosterior {
    prior: NigPrior,
    hazard: f64,
    prune_mass: f64,
    /// `(r, weight, stats)` sorted by `r`.
    runs: Vec<(usize, f64, NigStats)>,
    /// `lnG(alpha_n + 1/2) - lnG(alpha_n)` indexed by the run's count `n`.
    lgamma_cache: Vec<f64>,
}

impl RunLengthPosterior {
    /// A single run of length 0 holding the prior. `prune_mass = 0` disables pruning.
    pub fn new(prior: NigPrior, hazard: f64, prune_mass: f64) -> Result<Self> {
        if !(hazard > 0.0 && hazard < 1.0) {
            return Err(Error::ProbabilityOutOfRange(hazard));
        }
        if !(prior.kappa > 0.0 && prior.alpha > 0.0 && prior.beta > 0.0) {
            return Err(Error::InvalidConfig("prior kappa, alpha, beta must be positive".into()));
        }
        Ok(Self {
            prior,
            hazard,
            prune_mass,
            runs: vec![(0, 1.0, NigStats::from_prior(&prior))],
            lgamma_cache: Vec::new(),
        })
    }

    /// Back to the initial single-run state.
    pub fn reset(&mut self) {
        self.runs.clear();
        self.runs.push((0, 1.0, NigStats::from_prior(&self.prior)));
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn hazard(&self) -> f64 {
        self.hazard
    }

    /// `(run length, weight)` pairs in increasing run length.
    pub fn weights(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.runs.iter().map(|(r, w, _)| (*r, *w))
    }

    pub fn total_mass(&self) -> f64 {
        self.runs.iter().map(|(_, w, _)| w).sum()
    }

    /// Weight of run length 0.
    pub fn changepoint_mass(&self) -> f64 {
        match self.runs.first() {
            Some((0, w, _)) => *w,
            _ => 0.0,
        }
    }

    /// Most probable run length; ties go to the shorter run.
    pub fn map_run_length(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for &(r, w, _) in &self.runs {
            if w > best.1 {
                best = (r, w);
            }
        }
        best.0
    }

    fn lgamma_ratio(&mut self, s: &NigStats) -> f64 {
        while self.lgamma_cache.len() <= s.n {
            let a = self.prior.alpha + 0.5 * self.lgamma_cache.len() as f64;
            self.lgamma_cache.push(ln_gamma(a + 0.5) - ln_gamma(a));
        }
        self.lgamma_cache[s.n]
    }

    fn ln_predictive(&mut self, s: &NigStats, v: f64) -> f64 {
        let df = 2.0 * s.alpha;
        let scale = s.predictive_scale();
        let z = (v - s.mu) / scale;
        self.lgamma_ratio(s)
            - 0.5 * (df * std::f64::consts::PI).ln()
            - scale.ln()
            - (s.alpha + 0.5) * (z * z / df).ln_1p()
    }

    /// Absorbs one observation.
    ///
    /// A new run opened by `v` gets `H * p_prior(v)`; run `r` grows to `r + 1`
    /// with `(1 - H) * w_r * p_r(v)`.
    pub fn step(&mut self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::NonFinite("bocpd observation"));
        }
        let prior = NigStats::from_prior(&self.prior);
        let ln_h = self.hazard.ln();
        let ln_1h = (-self.hazard).ln_1p();
        let runs = std::mem::take(&mut self.runs);
        let mut next = Vec::with_capacity(runs.len() + 1);
        let lp0 = ln_h + self.ln_predictive(&prior, v);
        next.push((0usize, lp0, prior.absorb(v)));
        for (r, w, s) in &runs {
            if *w <= 0.0 {
                continue;
            }
            let lp = w.ln() + ln_1h + self.ln_predictive(s, v);
            next.push((r + 1, lp, s.absorb(v)));
        }
        let max = next.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in next.iter_mut() {
            x.1 = (x.1 - max).exp();
            total += x.1;
        }
        for x in next.iter_mut() {
            x.1 /= total;
        }
        self.runs = next;
        if self.prune_mass > 0.0 {
            self.prune();
        }
        Ok(())
    }

    /// Drops the lightest runs while their cumulative mass stays below the budget.
    fn prune(&mut self) {
        let mut order: Vec<usize> = (0..self.runs.len()).collect();
        order.sort_by(|&a, &b| self.runs[a].1.total_cmp(&self.runs[b].1));
        let mut dropped = 0.0;
        let mut drop = vec![false; self.runs.len()];
        for &i in &order {
            if dropped + self.runs[i].1 >= self.prune_mass {
                break;
            }
            dropped += self.runs[i].1;
            drop[i] = true;
        }
        if dropped == 0.0 && !drop.iter().any(|&d| d) {
            return;
        }
        let mut k = 0;
        self.runs.retain(|_| {
            let keep = !drop[k];
            k += 1;
            keep
        });
        let total = self.total_mass();
        for x in self.runs.iter_mut() {
            x.1 /= total;
        }
    }
}

/// Declares a changepoint at `t` when the run-length-0 mass exceeds `cutoff`
/// and at least `min_distance` steps have passed since the last detection.
pub fn bocpd_detect(
    posterior: &RunLengthPosterior,
    cutoff: f64,
    min_distance: u64,
    last_detection: u64,
    t: u64,
) -> bool {
    posterior.changepoint_mass() > cutoff && t.saturating_sub(last_detection) >= min_distance
}
