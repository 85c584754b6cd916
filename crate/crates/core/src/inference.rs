//! Per-coordinate z-tests, confidence intervals and support-recovery scores.

use serde::Serialize;

use crate::debias::DebiasedEstimate;
use crate::error::{Error, Result};
use crate::model::SparseSignal;
use crate::Scalar;

/// Standard normal quantile by Acklam's rational approximation
/// (relative error below 1.2e-9 over the open unit interval).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Two-sided critical value `Φ⁻¹(1 − α/2)`.
pub fn z_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(normal_quantile(1.0 - alpha / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportCall {
    /// `true` where `H0: β_j = 0` is rejected.
    pub b_hat: Vec<bool>,
    pub alpha: f64,
    pub z_crit: f64,
}

impl SupportCall {
    pub fn selected(&self) -> Vec<usize> {
        self.b_hat.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j).collect()
    }
}

/// Half-width `z·se_j` of each coordinate's interval, validating the estimate.
fn half_widths<F: Scalar>(est: &DebiasedEstimate<F>, z: f64) -> Result<Vec<f64>> {
    if est.beta_d.len() != est.stderr.len() {
        return Err(Error::mismatch("stderr length vs estimate length", est.beta_d.len(), est.stderr.len()));
    }
    est.beta_d
        .iter()
        .zip(est.stderr.iter())
        .enumerate()
        .map(|(j, (&b, &se))| {
            let se = se.as_f64();
            if !se.is_finite() || se < 0.0 {
                return Err(Error::invalid(format!("standard error {j} is {se}")));
            }
            if se == 0.0 && b != F::zero() {
                return Err(Error::DegenerateTest { coordinate: j });
            }
            Ok(z * se)
        })
        .collect()
}

/// Two-sided z-test of `β_j = 0` for every coordinate.
pub fn test_support<F: Scalar>(est: &DebiasedEstimate<F>, alpha: f64) -> Result<SupportCall> {
    let z_crit = z_critical(alpha)?;
    let widths = half_widths(est, z_crit)?;
    let b_hat = est.beta_d.iter().zip(widths).map(|(b, t)| b.as_f64().abs() > t).collect();
    Ok(SupportCall { b_hat, alpha, z_crit })
}

/// `β_j ± z·se_j`. Rejection by [`test_support`] coincides with `0` lying
/// outside the interval.
pub fn confidence_interval<F: Scalar>(est: &DebiasedEstimate<F>, alpha: f64) -> Result<Vec<(f64, f64)>> {
    let z = z_critical(alpha)?;
    let widths = half_widths(est, z)?;
    Ok(est
        .beta_d
        .iter()
        .zip(widths)
        .map(|(b, t)| (b.as_f64() - t, b.as_f64() + t))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub true_defective: usize,
    pub false_defective: usize,
    pub false_nondefective: usize,
    pub true_nondefective: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_defective + self.false_defective + self.false_nondefective + self.true_nondefective
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryScore {
    /// `None` when the truth has no support.
    pub sensitivity: Option<f64>,
    /// `None` when the truth has full support.
    pub specificity: Option<f64>,
    pub counts: ConfusionCounts,
}

pub fn score_support<F: Scalar>(call: &SupportCall, truth: &SparseSignal<F>) -> Result<RecoveryScore> {
    score_indicators(&call.b_hat, &truth.indicator())
}

/// Confusion counts of `called` against `truth`.
pub fn score_indicators(called: &[bool], truth: &[bool]) -> Result<RecoveryScore> {
    if called.len() != truth.len() {
        return Err(Error::mismatch("call length vs truth length", truth.len(), called.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &b) in truth.iter().zip(called) {
        match (t, b) {
            (true, true) => c.true_defective += 1,
            (false, true) => c.false_defective += 1,
            (true, false) => c.false_nondefective += 1,
            (false, false) => c.true_nondefective += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(RecoveryScore {
        sensitivity: ratio(c.true_defective, c.true_defective + c.false_nondefective),
        specificity: ratio(c.true_nondefective, c.true_nondefective + c.false_defective),
        counts: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn estimate(beta: Vec<f64>, se: Vec<f64>) -> DebiasedEstimate<f64> {
        DebiasedEstimate { beta_d: Array1::from(beta), stderr: Array1::from(se), mu: 0.3, sigma: 1.0 }
    }

    #[test]
    fn quantile_reference_values() {
        assert!((z_critical(0.05).unwrap() - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((normal_quantile(0.01) + 2.326_347_874_040_841).abs() < 1e-8);
        assert!((normal_quantile(1e-6) + 4.753_424_308_822_899).abs() < 1e-8);
        assert!(z_critical(0.0).is_err());
        assert!(z_critical(1.0).is_err());
    }

    #[test]
    fn quantile_agrees_with_statrs() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = Normal::new(0.0, 1.0).unwrap();
        for k in 1..1000 {
            let p = k as f64 / 1000.0;
            let z = normal_quantile(p);
            assert!((z - n.inverse_cdf(p)).abs() < 1e-8 * z.abs().max(1.0), "p={p}");
        }
    }

    #[test]
    fn z_test_decisions() {
        let e = estimate(vec![0.0, 10.0, 1.5, -2.5], vec![1.0, 1.0, 1.0, 1.0]);
        let call = test_support(&e, 0.05).unwrap();
        assert_eq!(call.b_hat, vec![false, true, false, true]);
        assert_eq!(call.selected(), vec![1, 3]);
    }

    #[test]
    fn interval_values() {
        let e = estimate(vec![5.0], vec![1.0]);
        let ci = confidence_interval(&e, 0.05).unwrap();
        assert!((ci[0].0 - 3.0400).abs() < 1e-4);
        assert!((ci[0].1 - 6.9600).abs() < 1e-4);
    }

    #[test]
    fn zero_stderr_handling() {
        let ok = estimate(vec![0.0, 1.0], vec![0.0, 1.0]);
        assert_eq!(test_support(&ok, 0.05).unwrap().b_hat, vec![false, false]);
        assert_eq!(confidence_interval(&ok, 0.05).unwrap()[0], (0.0, 0.0));
        let bad = estimate(vec![2.0], vec![0.0]);
        assert!(matches!(test_support(&bad, 0.05), Err(Error::DegenerateTest { coordinate: 0 })));
        assert!(confidence_interval(&bad, 0.05).is_err());
        let nan = estimate(vec![2.0], vec![f64::NAN]);
        assert!(test_support(&nan, 0.05).is_err());
    }

    #[test]
    fn confusion_counts() {
        let truth = SparseSignal::new(array![1.0, 1.0, 0.0, 0.0]);
        let call = SupportCall { b_hat: vec![true, false, false, true], alpha: 0.05, z_crit: 1.96 };
        let s = score_support(&call, &truth).unwrap();
        assert_eq!(s.sensitivity, Some(0.5));
        assert_eq!(s.specificity, Some(0.5));
        assert_eq!(s.counts.total(), 4);

        let exact = SupportCall { b_hat: vec![true, true, false, false], ..call.clone() };
        let s = score_support(&exact, &truth).unwrap();
        assert_eq!((s.sensitivity, s.specificity), (Some(1.0), Some(1.0)));

        let none = SupportCall { b_hat: vec![false; 4], ..call.clone() };
        let s = score_support(&none, &truth).unwrap();
        assert_eq!((s.sensitivity, s.specificity), (Some(0.0), Some(1.0)));

        let empty = SparseSignal::new(array![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(score_support(&none, &empty).unwrap().sensitivity, None);
        assert!(score_indicators(&[true], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn test_and_interval_agree(
            beta in prop::collection::vec(-10.0f64..10.0, 1..20),
            se_seed in prop::collection::vec(0.01f64..5.0, 20),
            alpha in 0.001f64..0.5,
        ) {
            let se: Vec<f64> = se_seed[..beta.len()].to_vec();
            let e = estimate(beta, se);
            let call = test_support(&e, alpha).unwrap();
            let ci = confidence_interval(&e, alpha).unwrap();
            for (b, (lo, hi)) in call.b_hat.iter().zip(ci) {
                prop_assert_eq!(*b, lo > 0.0 || hi < 0.0);
            }
        }

        #[test]
        fn larger_alpha_never_unrejects(
            beta in prop::collection::vec(-10.0f64..10.0, 1..20),
            a1 in 0.001f64..0.5,
            bump in 0.0f64..0.4,
        ) {
            let se = vec![1.0; beta.len()];
            let e = estimate(beta, se);
            let strict = test_support(&e, a1).unwrap();
            let loose = test_support(&e, a1 + bump).unwrap();
            for (s, l) in strict.b_hat.iter().zip(loose.b_hat.iter()) {
                prop_assert!(!s || *l);
            }
        }

        #[test]
        fn counts_partition(truth in prop::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let called: Vec<bool> = (0..truth.len()).map(|i| crate::rng::mix64(seed ^ i as u64) & 1 == 1).collect();
            let s = score_indicators(&called, &truth).unwrap();
            prop_assert_eq!(s.counts.total(), truth.len());
            for v in [s.sensitivity, s.specificity].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
