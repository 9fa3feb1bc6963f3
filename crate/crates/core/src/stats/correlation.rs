//! Pearson correlation with a t-test p-value and a Fisher-z confidence
//! interval.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::StatsError;

pub const MIN_CORRELATION_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PearsonResult {
    pub r: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub n: usize,
}

/// Pearson r with a two-sided t-test p-value and 95% Fisher-z interval.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<PearsonResult, StatsError> {
    pearson_r_with_confidence(x, y, 0.95)
}

pub fn pearson_r_with_confidence(
    x: &[f64],
    y: &[f64],
    confidence: f64,
) -> Result<PearsonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < MIN_CORRELATION_POINTS {
        return Err(StatsError::TooFewPoints(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return Err(StatsError::ConstantInput);
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    let crit = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + confidence / 2.0);
    let z = r.atanh();
    let half = crit / (nf - 3.0).sqrt();
    Ok(PearsonResult {
        r,
        p_value,
        ci_low: (z - half).tanh(),
        ci_high: (z + half).tanh(),
        confidence,
        n,
    })
}
