//! Kolmogorov–Smirnov statistics.
//!
//! p-values use the asymptotic Kolmogorov distribution with Stephens'
//! small-sample correction. When the reference distribution was fitted to the
//! same sample the one-sample p-value is only approximate.

use std::cmp::Ordering;

use super::special::kolmogorov_survival;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>, StatsError> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(s)
}

fn stephens_p(effective_n: f64, d: f64) -> f64 {
    let en = effective_n.sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

/// sup |ECDF − F| against a continuous reference CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let s = sorted(sample)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

pub fn one_sample_ks(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, StatsError> {
    let statistic = ks_statistic(sample, cdf)?;
    Ok(KsResult {
        statistic,
        p_value: stephens_p(sample.len() as f64, statistic),
    })
}

/// Two-sample KS: D = sup |ECDF_a − ECDF_b|.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::InsufficientSamples {
            needed: 1,
            got: a.len().min(b.len()),
        });
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let statistic = d.clamp(0.0, 1.0);
    Ok(KsResult {
        statistic,
        p_value: stephens_p(na * nb / (na + nb), statistic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force sup over every observed point.
    fn brute_two_sample(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identical_and_disjoint_samples() {
        let a = [3.0, 1.0, 2.0, 2.0];
        let r = two_sample_ks(&a, &[2.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = two_sample_ks(&[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn uniform_reference() {
        let s = [0.1, 0.4, 0.7];
        let d = ks_statistic(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        // max(1/3-0.1, 0.4-1/3, 2/3-0.4, 0.7-2/3, 1-0.7) = 0.3
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_rejected() {
        assert!(two_sample_ks(&[], &[1.0]).is_err());
        assert!(two_sample_ks(&[f64::NAN], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_symmetric(
            a in proptest::collection::vec(-5i32..5, 1..30),
            b in proptest::collection::vec(-5i32..5, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = two_sample_ks(&a, &b).unwrap();
            let ba = two_sample_ks(&b, &a).unwrap();
            prop_assert!((ab.statistic - brute_two_sample(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(ab, ba);
            // monotone transform of both samples leaves D unchanged
            let ea: Vec<f64> = a.iter().map(|x| (x / 3.0).exp() * 2.0 + 1.0).collect();
            let eb: Vec<f64> = b.iter().map(|x| (x / 3.0).exp() * 2.0 + 1.0).collect();
            prop_assert!((two_sample_ks(&ea, &eb).unwrap().statistic - ab.statistic).abs() < 1e-12);
        }
    }
}
