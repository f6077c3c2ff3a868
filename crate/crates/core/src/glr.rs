//! Offline GLR changepoint test inside one window.
//!
//! Under the null, the window is i.i.d. Gaussian with unknown mean and
//! variance. Under the alternative, the window splits at local position `c`
//! into `v[1..c-1]` and `v[c..T]`, each with its own mean and variance.
//! Plugging in the per-segment MLEs gives
//!
//! ```text
//! -2 log L(c) = T ln S(v[1..T]) - (c-1) ln S(v[1..c-1]) - (T-c+1) ln S(v[c..T])
//! ```
//!
//! with `S` the floored 1/n variance. All splits of a window are evaluated in
//! O(T) from forward and backward running moments.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationTable;
use crate::error::{Error, Result};
use crate::stats::mle_variance_floored;
use crate::types::{ScoreWindow, VARIANCE_FLOOR};

/// Maximum of `-2 log L(c)` over the candidate splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZStatistic {
    pub z: f64,
    /// Smallest maximizing split, 1-based.
    pub c_star: usize,
}

/// Outcome of one offline test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub reject: bool,
    pub c_star: usize,
    pub z: f64,
    /// `-2 log L` at the first split past the candidate range, `c = T - alpha + 1`.
    pub extended_value: f64,
    pub threshold: f64,
}

/// `-2 log L(c)` for one split, computed directly from the two segments.
pub fn neg2_log_lambda(values: &[f64], c: usize) -> Result<f64> {
    neg2_log_lambda_floored(values, c, VARIANCE_FLOOR)
}

pub fn neg2_log_lambda_floored(values: &[f64], c: usize, floor: f64) -> Result<f64> {
    let t = values.len();
    if c < 2 || c > t {
        return Err(Error::DegenerateSplit { c, len: t });
    }
    let all = mle_variance_floored(values, floor)?;
    let left = mle_variance_floored(&values[..c - 1], floor)?;
    let right = mle_variance_floored(&values[c - 1..], floor)?;
    Ok(t as f64 * all.ln() - (c - 1) as f64 * left.ln() - (t - c + 1) as f64 * right.ln())
}

fn check_border(t: usize, alpha: usize) -> Result<()> {
    if alpha == 0 || t < 2 * alpha + 1 {
        return Err(Error::EmptyCandidateSet { window: t, alpha });
    }
    Ok(())
}

/// Reusable buffers for scanning many windows of the same length.
#[derive(Debug, Default, Clone)]
pub struct SplitScanner {
    prefix_m2: Vec<f64>,
}

/// Result of a full scan: the statistic plus the extended-border value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult {
    pub z: f64,
    pub c_star: usize,
    pub extended_value: f64,
}

impl SplitScanner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scans `c` over `[alpha+1, T-alpha+1]`; the last position only feeds
    /// `extended_value`.
    pub fn scan(&mut self, values: &[f64], alpha: usize, floor: f64) -> Result<ScanResult> {
        let t = values.len();
        check_border(t, alpha)?;

        // prefix_m2[k] = sum of squared deviations of the first k values.
        self.prefix_m2.clear();
        self.prefix_m2.reserve(t + 1);
        self.prefix_m2.push(0.0);
        let (mut mean, mut m2) = (0.0f64, 0.0f64);
        for (i, &v) in values.iter().enumerate() {
            let n = (i + 1) as f64;
            let d = v - mean;
            mean += d / n;
            m2 += d * (v - mean);
            self.prefix_m2.push(m2);
        }
        let tf = t as f64;
        let total = tf * (m2 / tf).max(floor).ln();

        let c_lo = alpha + 1;
        let c_ext = t - alpha + 1;

        // Walk c downward so the suffix v[c..T] grows one value at a time.
        let (mut s_mean, mut s_m2) = (0.0f64, 0.0f64);
        let mut best = f64::NEG_INFINITY;
        let mut best_c = c_lo;
        let mut extended_value = f64::NAN;
        for c in (c_lo..=t).rev() {
            let v = values[c - 1];
            let n_right = (t - c + 1) as f64;
            let d = v - s_mean;
            s_mean += d / n_right;
            s_m2 += d * (v - s_mean);
            if c > c_ext {
                continue;
            }
            let n_left = (c - 1) as f64;
            let left = (self.prefix_m2[c - 1] / n_left).max(floor);
            let right = (s_m2 / n_right).max(floor);
            let val = total - n_left * left.ln() - n_right * right.ln();
            if c == c_ext {
                extended_value = val;
            } else if val >= best {
                best = val;
                best_c = c;
            }
        }
        Ok(ScanResult {
            z: best,
            c_star: best_c,
            extended_value,
        })
    }
}

/// GLR statistic of a window with border `alpha`.
pub fn z_statistic(values: &[f64], alpha: usize) -> Result<ZStatistic> {
    z_statistic_floored(values, alpha, VARIANCE_FLOOR)
}

pub fn z_statistic_floored(values: &[f64], alpha: usize, floor: f64) -> Result<ZStatistic> {
    let r = SplitScanner::new().scan(values, alpha, floor)?;
    Ok(ZStatistic {
        z: r.z,
        c_star: r.c_star,
    })
}

/// Offline test of one full window at error level `delta`.
///
/// Rejects when `Z` exceeds both the calibrated threshold and the value at the
/// extended border position, so a change sitting in the right border is left
/// for the next window.
pub fn offline_detect(
    window: &ScoreWindow,
    alpha: usize,
    delta: f64,
    table: &CalibrationTable,
) -> Result<OfflineResult> {
    offline_detect_floored(window, alpha, delta, table, VARIANCE_FLOOR)
}

pub fn offline_detect_floored(
    window: &ScoreWindow,
    alpha: usize,
    delta: f64,
    table: &CalibrationTable,
    floor: f64,
) -> Result<OfflineResult> {
    table.check_matches(window.len(), alpha)?;
    let threshold = table.threshold_for(delta);
    let scan = SplitScanner::new().scan(&window.values, alpha, floor)?;
    Ok(OfflineResult {
        reject: scan.z > threshold && scan.z > scan.extended_value,
        c_star: scan.c_star,
        z: scan.z,
        extended_value: scan.extended_value,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    // Gaussian log-likelihood at the segment MLEs, summed point by point.
    fn sup_loglik(seg: &[f64]) -> f64 {
        let n = seg.len() as f64;
        let mu = seg.iter().sum::<f64>() / n;
        let var = (seg.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
        seg.iter()
            .map(|x| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mu).powi(2) / (2.0 * var))
            .sum()
    }

    fn oracle(values: &[f64], c: usize) -> f64 {
        -2.0 * (sup_loglik(values) - sup_loglik(&values[..c - 1]) - sup_loglik(&values[c - 1..]))
    }

    #[test]
    fn equal_variances_give_zero() {
        let v = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        assert!(neg2_log_lambda(&v, 5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn floored_step_window() {
        let v = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let got = neg2_log_lambda(&v, 5).unwrap();
        let want = 8.0 * 0.25f64.ln() - 8.0 * 1e-12f64.ln();
        assert!((got - want).abs() < 1e-9);
        assert!((got - 209.957_814).abs() < 1e-5);
    }

    #[test]
    fn degenerate_splits_rejected() {
        let v = [1.0, 2.0, 3.0];
        assert!(matches!(neg2_log_lambda(&v, 1), Err(Error::DegenerateSplit { .. })));
        assert!(matches!(neg2_log_lambda(&v, 4), Err(Error::DegenerateSplit { .. })));
        assert!(neg2_log_lambda(&v, 3).is_ok());
    }

    #[test]
    fn direct_form_matches_likelihood_oracle() {
        // Single-point segments hit the variance floor, where the closed form
        // and the pointwise likelihood part ways.
        let v = normals(5, 20);
        for c in 3..=19 {
            let got = neg2_log_lambda(&v, c).unwrap();
            assert!((got - oracle(&v, c)).abs() < 1e-9, "c = {c}");
        }
    }

    #[test]
    fn scan_matches_direct_form() {
        for seed in 0..50 {
            let v = normals(seed, 40);
            let alpha = 5;
            let r = SplitScanner::new().scan(&v, alpha, VARIANCE_FLOOR).unwrap();
            let (mut best, mut best_c) = (f64::NEG_INFINITY, 0);
            for c in alpha + 1..=40 - alpha {
                let x = neg2_log_lambda(&v, c).unwrap();
                if x > best {
                    best = x;
                    best_c = c;
                }
            }
            assert!((r.z - best).abs() < 1e-9);
            assert_eq!(r.c_star, best_c);
            let ext = neg2_log_lambda(&v, 40 - alpha + 1).unwrap();
            assert!((r.extended_value - ext).abs() < 1e-9);
        }
    }

    #[test]
    fn null_window_candidate_in_range() {
        let v = normals(17, 100);
        let z = z_statistic(&v, 25).unwrap();
        assert!(z.z.is_finite());
        assert!((26..=75).contains(&z.c_star));
    }

    #[test]
    fn mean_step_is_located() {
        let noise = normals(23, 100);
        let v: Vec<f64> = (0..100)
            .map(|i| if i < 50 { 0.0 } else { 5.0 } + 0.01 * noise[i])
            .collect();
        assert_eq!(z_statistic(&v, 12).unwrap().c_star, 51);
    }

    #[test]
    fn location_scale_invariance() {
        let v = normals(99, 100);
        let w: Vec<f64> = v.iter().map(|x| 3.7 * x - 2.1).collect();
        let a = z_statistic(&v, 25).unwrap();
        let b = z_statistic(&w, 25).unwrap();
        assert!((a.z - b.z).abs() < 1e-8);
        assert_eq!(a.c_star, b.c_star);
    }

    #[test]
    fn empty_candidate_set() {
        let v = normals(1, 10);
        assert!(matches!(z_statistic(&v, 5), Err(Error::EmptyCandidateSet { .. })));
        assert!(z_statistic(&v, 4).is_ok());
    }

    #[test]
    fn constant_window_is_flat_and_deterministic() {
        let v = vec![2.0; 30];
        let a = z_statistic(&v, 7).unwrap();
        let b = z_statistic(&v, 7).unwrap();
        assert!(a.z.abs() < 1e-9);
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_in_shift_size() {
        let noise = normals(8, 100);
        let mut last = f64::NEG_INFINITY;
        for m in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let v: Vec<f64> = noise
                .iter()
                .enumerate()
                .map(|(i, x)| x + if i >= 60 { m } else { 0.0 })
                .collect();
            let z = z_statistic(&v, 25).unwrap().z;
            assert!(z >= last - 1e-12, "m = {m}: {z} < {last}");
            last = z;
        }
    }

    #[test]
    fn variance_shift_is_detected_by_the_statistic() {
        let noise = normals(31, 100);
        let null = z_statistic(&noise, 25).unwrap().z;
        let v: Vec<f64> = noise
            .iter()
            .enumerate()
            .map(|(i, x)| if i >= 50 { 4.0 * x } else { *x })
            .collect();
        let z = z_statistic(&v, 25).unwrap();
        assert!(z.z > null + 20.0);
        assert!((46..=56).contains(&z.c_star));
    }
}
