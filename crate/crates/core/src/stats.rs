//! Scalar statistics shared by the detectors and the calibration code.

use crate::error::{Error, Result};
use crate::types::VARIANCE_FLOOR;

/// Maximum-likelihood (1/n) variance with the default floor.
pub fn mle_variance(values: &[f64]) -> Result<f64> {
    mle_variance_floored(values, VARIANCE_FLOOR)
}

/// Maximum-likelihood variance, never below `floor`.
pub fn mle_variance_floored(values: &[f64], floor: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySegment);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / n).max(floor))
}

/// Unbiased (1/(n-1)) variance, never below `floor`.
pub fn unbiased_variance_floored(values: &[f64], floor: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewItems(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1.0)).max(floor))
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Log-transformed negative log-probability of one item, `ln(-ln p + eps)`.
pub fn discrete_item_score(p: f64, eps: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok((-p.ln() + eps).ln())
}

/// Batch-average of `ln(-ln p + eps)` over the probabilities assigned to the
/// observed outcomes. Makes discrete-output scores closer to normal.
pub fn score_transform_discrete(probabilities: &[f64], eps: f64) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::EmptySegment);
    }
    let mut acc = 0.0;
    for &p in probabilities {
        acc += discrete_item_score(p, eps)?;
    }
    Ok(acc / probabilities.len() as f64)
}

/// Batch-average negative log-likelihood.
pub fn score_mean_nll(losses: &[f64]) -> Result<f64> {
    mean(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Pairwise identity: var = (1 / 2n^2) sum_ij (v_i - v_j)^2.
    fn pairwise_variance(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mut s = 0.0;
        for a in v {
            for b in v {
                s += (a - b) * (a - b);
            }
        }
        s / (2.0 * n * n)
    }

    #[test]
    fn alternating_signs_have_unit_variance() {
        assert_eq!(mle_variance(&[-1.0, 1.0, -1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn constant_segment_hits_floor() {
        assert_eq!(mle_variance(&[5.0, 5.0, 5.0]).unwrap(), VARIANCE_FLOOR);
    }

    #[test]
    fn empty_segment_is_an_error() {
        assert_eq!(mle_variance(&[]), Err(Error::EmptySegment));
    }

    #[test]
    fn matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = mle_variance(&v).unwrap();
        assert!((got - pairwise_variance(&v)).abs() < 1e-12);
    }

    #[test]
    fn discrete_transform_examples() {
        let eps = 1e-8;
        let s = score_transform_discrete(&[1.0], eps).unwrap();
        assert!((s - (1e-8f64).ln()).abs() < 1e-12);
        assert!((s + 18.420680743952367).abs() < 1e-9);

        let s = score_transform_discrete(&[(-1.0f64).exp()], eps).unwrap();
        assert!((s - 1e-8).abs() < 1e-12);

        let ps = [0.9, 0.5, 0.1];
        let expected = ((0.10536051565782628 + eps).ln()
            + (std::f64::consts::LN_2 + eps).ln()
            + (std::f64::consts::LN_10 + eps).ln())
            / 3.0;
        let s = score_transform_discrete(&ps, eps).unwrap();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn discrete_transform_rejects_bad_probabilities() {
        assert!(matches!(
            score_transform_discrete(&[0.0], 1e-8),
            Err(Error::ProbabilityOutOfRange(_))
        ));
        assert!(score_transform_discrete(&[1.5], 1e-8).is_err());
        assert!(score_transform_discrete(&[-0.1], 1e-8).is_err());
    }

    #[test]
    fn mean_nll_examples() {
        assert_eq!(score_mean_nll(&[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(score_mean_nll(&[7.25]).unwrap(), 7.25);
        assert!(score_mean_nll(&[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut oracle = 0.0;
        for x in &v {
            oracle += x;
        }
        oracle /= 50.0;
        assert!((score_mean_nll(&v).unwrap() - oracle).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn variance_translation_invariant(
            v in prop::collection::vec(-10.0f64..10.0, 2..40),
            c in -10.0f64..10.0,
        ) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = mle_variance(&v).unwrap();
            let b = mle_variance(&shifted).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn variance_scales_quadratically(
            v in prop::collection::vec(-10.0f64..10.0, 2..40),
            a in 0.1f64..5.0,
        ) {
            let base = mle_variance(&v).unwrap();
            prop_assume!(base > 1e-6);
            let scaled: Vec<f64> = v.iter().map(|x| a * x).collect();
            let got = mle_variance(&scaled).unwrap();
            prop_assert!((got - a * a * base).abs() <= 1e-10 * got.max(1.0));
        }

        #[test]
        fn mean_nll_permutation_invariant(
            v in prop::collection::vec(0.0f64..10.0, 1..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut w = v.clone();
            w.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = score_mean_nll(&v).unwrap();
            let b = score_mean_nll(&w).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
