//! Changepoint-list metrics under tolerance matching, and an omnibus
//! normality diagnostic for score samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-to-one matching of true and detected changepoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(true, detected)` with `|true - detected| <= tolerance`.
    pub pairs: Vec<(u64, u64)>,
    pub tp: usize,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
}

fn check_sorted(v: &[u64]) -> Result<()> {
    match v.windows(2).position(|w| w[0] >= w[1]) {
        Some(i) => Err(Error::Unsorted(i + 1)),
        None => Ok(()),
    }
}

/// Maximum one-to-one matching within `tolerance`.
///
/// Each true changepoint, in increasing order, takes the earliest unmatched
/// detection inside its tolerance interval. All intervals have equal width,
/// so this greedy matching has maximum cardinality.
pub fn match_changepoints(truth: &[u64], detected: &[u64], tolerance: u64) -> Result<MatchResult> {
    check_sorted(truth)?;
    check_sorted(detected)?;
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < truth.len() && j < detected.len() {
        let (t, d) = (truth[i], detected[j]);
        if d + tolerance < t {
            j += 1;
        } else if d > t + tolerance {
            i += 1;
        } else {
            pairs.push((t, d));
            i += 1;
            j += 1;
        }
    }
    let tp = pairs.len();
    let (nt, nd) = (truth.len(), detected.len());
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(MatchResult {
        pairs,
        tp,
        jaccard: ratio(tp, nt + nd - tp),
        precision: ratio(tp, nd),
        recall: ratio(tp, nt),
    })
}

/// D'Agostino-Pearson omnibus statistic and its chi-square(2) p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub k2: f64,
    pub p: f64,
    pub skew_z: f64,
    pub kurtosis_z: f64,
}

pub const NORMALITY_MIN_SAMPLES: usize = 20;

/// Skewness and kurtosis transforms to approximate standard normals, combined
/// as `K^2 = Z_1^2 + Z_2^2`.
pub fn normality_test(samples: &[f64]) -> Result<NormalityResult> {
    if samples.len() < NORMALITY_MIN_SAMPLES {
        return Err(Error::NotEnoughSamples {
            needed: NORMALITY_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normality sample"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in samples {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 <= 0.0 {
        return Err(Error::NonFinite("normality test on a constant sample"));
    }
    let skew_z = skew_z(m3 / m2.powf(1.5), n);
    let kurtosis_z = kurtosis_z(m4 / (m2 * m2), n);
    let k2 = skew_z * skew_z + kurtosis_z * kurtosis_z;
    Ok(NormalityResult {
        k2,
        p: (-0.5 * k2).exp(),
        skew_z,
        kurtosis_z,
    })
}

fn skew_z(b1: f64, n: f64) -> f64 {
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 =
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let r = y / alpha;
    delta * (r + (r * r + 1.0).sqrt()).ln()
}

fn kurtosis_z(b2: f64, n: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    // Largest matching by trying every assignment of each true point.
    fn optimal_tp(truth: &[u64], detected: &[u64], tol: u64) -> usize {
        fn go(i: usize, truth: &[u64], detected: &[u64], used: &mut [bool], tol: u64) -> usize {
            if i == truth.len() {
                return 0;
            }
            let mut best = go(i + 1, truth, detected, used, tol);
            for j in 0..detected.len() {
                if !used[j] && truth[i].abs_diff(detected[j]) <= tol {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, truth, detected, used, tol));
                    used[j] = false;
                }
            }
            best
        }
        go(0, truth, detected, &mut vec![false; detected.len()], tol)
    }

    #[test]
    fn one_match_example() {
        let m = match_changepoints(&[100, 200], &[101, 350], 5).unwrap();
        assert_eq!(m.tp, 1);
        assert_eq!(m.pairs, vec![(100, 101)]);
        assert!((m.jaccard - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((m.precision, m.recall), (0.5, 0.5));
    }

    #[test]
    fn identical_lists() {
        let v = [3, 50, 51, 900];
        let m = match_changepoints(&v, &v, 0).unwrap();
        assert_eq!((m.jaccard, m.precision, m.recall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn earlier_tie() {
        let m = match_changepoints(&[100], &[96, 104], 5).unwrap();
        assert_eq!(m.pairs, vec![(100, 96)]);
        assert!((m.jaccard - 0.5).abs() < 1e-15);
        assert_eq!(optimal_tp(&[100], &[96, 104], 5), 1);
    }

    #[test]
    fn nearest_choice_would_lose_a_match() {
        let m = match_changepoints(&[5, 10], &[0, 9], 5).unwrap();
        assert_eq!(m.tp, 2);
    }

    #[test]
    fn empty_conventions() {
        let m = match_changepoints(&[], &[], 5).unwrap();
        assert_eq!((m.jaccard, m.precision, m.recall), (1.0, 1.0, 1.0));
        let m = match_changepoints(&[10], &[], 5).unwrap();
        assert_eq!((m.jaccard, m.precision, m.recall), (0.0, 1.0, 0.0));
        let m = match_changepoints(&[], &[10], 5).unwrap();
        assert_eq!((m.jaccard, m.precision, m.recall), (0.0, 0.0, 1.0));
    }

    #[test]
    fn unsorted_is_rejected() {
        assert_eq!(match_changepoints(&[5, 3], &[], 1), Err(Error::Unsorted(1)));
        assert_eq!(match_changepoints(&[], &[1, 1], 1), Err(Error::Unsorted(1)));
    }

    #[test]
    fn greedy_equals_exhaustive_matching() {
        let mut rng = seeded_rng(77);
        for _ in 0..2000 {
            let draw = |rng: &mut crate::rng::Rng| {
                let n = rng.random_range(0..=6);
                let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..40)).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            let (t, d) = (draw(&mut rng), draw(&mut rng));
            let tol = rng.random_range(0..=6);
            let m = match_changepoints(&t, &d, tol).unwrap();
            assert_eq!(m.tp, optimal_tp(&t, &d, tol), "{t:?} {d:?} {tol}");
            assert!(m.pairs.iter().all(|(a, b)| a.abs_diff(*b) <= tol));
        }
    }

    proptest! {
        #[test]
        fn metric_identities(
            t in prop::collection::btree_set(0u64..200, 0..8),
            d in prop::collection::btree_set(0u64..200, 0..8),
            tol in 0u64..10,
            shift in 0u64..1000,
        ) {
            let t: Vec<u64> = t.into_iter().collect();
            let d: Vec<u64> = d.into_iter().collect();
            let m = match_changepoints(&t, &d, tol).unwrap();
            prop_assert!(m.jaccard <= m.precision.min(m.recall) + 1e-15);
            prop_assert!(m.tp <= t.len().min(d.len()));
            let ts: Vec<u64> = t.iter().map(|v| v + shift).collect();
            let ds: Vec<u64> = d.iter().map(|v| v + shift).collect();
            let s = match_changepoints(&ts, &ds, tol).unwrap();
            prop_assert_eq!((s.tp, s.jaccard, s.precision, s.recall), (m.tp, m.jaccard, m.precision, m.recall));
        }
    }

    #[test]
    fn normality_matches_reference_values() {
        // Reference values from an independent implementation of the same test.
        let a: Vec<f64> = (0..30).map(|i| ((i * 37) % 23) as f64 / 7.0 + 0.1 * i as f64).collect();
        let b: Vec<f64> = (0..25).map(|i| (((i * 13) % 17) as f64 / 4.0).exp()).collect();
        let c: Vec<f64> = (0..100).map(|i| (i as f64).sin() * 3.0 + (i % 5) as f64).collect();
        let expect = [
            (
                &a,
                0.46096426121385686,
                0.7941506258651322,
                -0.5344192306940789,
                -0.41876048891723977,
            ),
            (
                &b,
                10.05411176363246,
                0.006558089968136675,
                2.8064628543501793,
                1.4757635348473357,
            ),
            (
                &c,
                6.274660679545099,
                0.043398502643511076,
                -0.04111604476781221,
                -2.5045898167979024,
            ),
        ];
        for (s, k2, p, zs, zk) in expect {
            let r = normality_test(s).unwrap();
            assert!((r.k2 - k2).abs() < 1e-9 * (1.0 + k2), "{} vs {k2}", r.k2);
            assert!((r.p - p).abs() < 1e-10);
            assert!((r.skew_z - zs).abs() < 1e-9);
            assert!((r.kurtosis_z - zk).abs() < 1e-9);
        }
    }

    #[test]
    fn normality_small_and_constant_samples() {
        assert!(matches!(
            normality_test(&[0.0; 19]),
            Err(Error::NotEnoughSamples { .. })
        ));
        assert!(normality_test(&[1.0; 30]).is_err());
    }

    #[test]
    fn normality_null_rate_and_power() {
        let mut keep = 0;
        let mut reject = 0;
        for seed in 0..100 {
            let mut rng = seeded_rng(seed);
            let x: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
            let r = normality_test(&x).unwrap();
            assert!(r.k2 >= 0.0);
            keep += (r.p > 0.01) as usize;
            let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            reject += (normality_test(&y).unwrap().p < 0.01) as usize;
        }
        assert!(keep >= 95, "{keep}");
        assert!(reject >= 90, "{reject}");
    }
}
