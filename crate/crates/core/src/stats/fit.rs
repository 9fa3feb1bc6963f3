//! Maximum-likelihood fitting of candidate distribution families, scored by
//! the one-sample KS statistic against the fitted CDF.
//!
//! Parameters follow the (shape, loc, scale) convention: `loc` shifts the
//! support, `scale` is the median for the log-normal (e^μ) and the usual
//! scale elsewhere. Three-parameter families (log-normal, Weibull, gamma)
//! pick `loc` by profile likelihood over a fixed grid of points in
//! `[0, min)`; the other two parameters are MLEs at each grid point.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Exp, Gamma, LogNormal, Normal, Weibull};
use statrs::function::gamma::{digamma, ln_gamma};

use super::ks::one_sample_ks;
use super::special::{gamma_shape_from_log_gap, trigamma};
use super::StatsError;

pub const MIN_FIT_SAMPLES: usize = 8;
pub const LOCATION_GRID_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Normal,
    LogNormal,
    Weibull,
    Exponential,
    Gamma,
    PowerLaw,
    ChiSquared,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Normal,
        Family::LogNormal,
        Family::Weibull,
        Family::Exponential,
        Family::Gamma,
        Family::PowerLaw,
        Family::ChiSquared,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::LogNormal => "lognormal",
            Family::Weibull => "weibull",
            Family::Exponential => "exponential",
            Family::Gamma => "gamma",
            Family::PowerLaw => "powerlaw",
            Family::ChiSquared => "chisquared",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == t)
            .or(match t.as_str() {
                "chi2" => Some(Family::ChiSquared),
                "expon" => Some(Family::Exponential),
                "norm" => Some(Family::Normal),
                _ => None,
            })
            .ok_or_else(|| StatsError::UnknownFamily(s.to_string()))
    }
}

/// `shape` is absent for the normal and exponential families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub shape: Option<f64>,
    pub loc: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFit {
    pub family: Family,
    pub params: FitParams,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    pub log_likelihood: f64,
}

impl DistributionFit {
    pub fn cdf(&self, x: f64) -> f64 {
        cdf(self.family, &self.params, x)
    }
}

fn cdf(family: Family, p: &FitParams, x: f64) -> f64 {
    let y = x - p.loc;
    let shape = p.shape.unwrap_or(f64::NAN);
    match family {
        Family::Normal => Normal::new(p.loc, p.scale).map_or(f64::NAN, |d| d.cdf(x)),
        Family::LogNormal => {
            if y <= 0.0 {
                0.0
            } else {
                LogNormal::new(p.scale.ln(), shape).map_or(f64::NAN, |d| d.cdf(y))
            }
        }
        Family::Weibull => Weibull::new(shape, p.scale).map_or(f64::NAN, |d| d.cdf(y.max(0.0))),
        Family::Exponential => Exp::new(1.0 / p.scale).map_or(f64::NAN, |d| d.cdf(y.max(0.0))),
        Family::Gamma => Gamma::new(shape, 1.0 / p.scale).map_or(f64::NAN, |d| d.cdf(y.max(0.0))),
        Family::PowerLaw => {
            if x <= p.scale {
                0.0
            } else {
                1.0 - (x / p.scale).powf(1.0 - shape)
            }
        }
        Family::ChiSquared => ChiSquared::new(shape).map_or(f64::NAN, |d| d.cdf(y.max(0.0))),
    }
}

struct Candidate {
    params: FitParams,
    log_likelihood: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn lognormal_at(x: &[f64], loc: f64) -> Option<Candidate> {
    let logs: Vec<f64> = x.iter().map(|v| (v - loc).ln()).collect();
    let mu = mean(&logs);
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / logs.len() as f64;
    let sigma = var.sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return None;
    }
    let n = x.len() as f64;
    let ll = -logs.iter().sum::<f64>()
        - n * sigma.ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * n;
    Some(Candidate {
        params: FitParams {
            shape: Some(sigma),
            loc,
            scale: mu.exp(),
        },
        log_likelihood: ll,
    })
}

fn weibull_shape(y: &[f64]) -> Option<f64> {
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mean_log = mean(&logs);
    let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Terms are computed relative to the largest observation to avoid overflow.
    let moments = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let w = (k * (l - max_log)).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        (s0, s1, s2)
    };
    let g = |k: f64| {
        let (s0, s1, _) = moments(k);
        s1 / s0 - 1.0 / k - mean_log
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return None;
        }
    }
    let mut k = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (s0, s1, s2) = moments(k);
        let gk = s1 / s0 - 1.0 / k - mean_log;
        if gk > 0.0 {
            hi = k;
        } else {
            lo = k;
        }
        let dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        let mut next = k - gk / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - k).abs() <= 1e-13 * k {
            return Some(next);
        }
        k = next;
    }
    Some(k)
}

fn weibull_at(x: &[f64], loc: f64) -> Option<Candidate> {
    let y: Vec<f64> = x.iter().map(|v| v - loc).collect();
    let k = weibull_shape(&y)?;
    let n = y.len() as f64;
    let scale = (y.iter().map(|v| v.powf(k)).sum::<f64>() / n).powf(1.0 / k);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let sum_log: f64 = y.iter().map(|v| v.ln()).sum();
    let sum_pow: f64 = y.iter().map(|v| (v / scale).powf(k)).sum();
    let ll = n * k.ln() - n * k * scale.ln() + (k - 1.0) * sum_log - sum_pow;
    Some(Candidate {
        params: FitParams {
            shape: Some(k),
            loc,
            scale,
        },
        log_likelihood: ll,
    })
}

fn gamma_at(x: &[f64], loc: f64) -> Option<Candidate> {
    let y: Vec<f64> = x.iter().map(|v| v - loc).collect();
    let n = y.len() as f64;
    let m = mean(&y);
    let mean_log = y.iter().map(|v| v.ln()).sum::<f64>() / n;
    let s = m.ln() - mean_log;
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    let k = gamma_shape_from_log_gap(s);
    let theta = m / k;
    let ll = (k - 1.0) * mean_log * n - n * m / theta - n * k * theta.ln() - n * ln_gamma(k);
    Some(Candidate {
        params: FitParams {
            shape: Some(k),
            loc,
            scale: theta,
        },
        log_likelihood: ll,
    })
}

fn profile_location(
    x: &[f64],
    min: f64,
    family: Family,
    at: impl Fn(&[f64], f64) -> Option<Candidate>,
) -> Result<Candidate, StatsError> {
    if min <= 0.0 {
        return Err(StatsError::SupportViolation(format!(
            "{family} requires positive samples (minimum {min})"
        )));
    }
    (0..LOCATION_GRID_POINTS)
        .filter_map(|g| at(x, min * g as f64 / LOCATION_GRID_POINTS as f64))
        .filter(|c| c.log_likelihood.is_finite())
        .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        .ok_or_else(|| StatsError::FitFailed(format!("{family}: no admissible location")))
}

fn chi_squared_df(x: &[f64]) -> Option<f64> {
    // ψ(df/2) = mean ln x − ln 2
    let target = mean(&x.iter().map(|v| v.ln()).collect::<Vec<_>>()) - std::f64::consts::LN_2;
    let mut k: f64 = if target > -2.0 {
        target.exp() + 0.5
    } else {
        -1.0 / (target + 0.5772156649015329)
    };
    for _ in 0..100 {
        let next = k - (digamma(k) - target) / trigamma(k);
        let next = if next <= 0.0 { k / 2.0 } else { next };
        if (next - k).abs() <= 1e-12 * k {
            k = next;
            break;
        }
        k = next;
    }
    (k.is_finite() && k > 0.0).then_some(2.0 * k)
}

fn fit_params(x: &[f64], family: Family) -> Result<Candidate, StatsError> {
    let n = x.len() as f64;
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let m = mean(x);
    match family {
        Family::Normal => {
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            let ll = -n * sd.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * n;
            Ok(Candidate {
                params: FitParams {
                    shape: None,
                    loc: m,
                    scale: sd,
                },
                log_likelihood: ll,
            })
        }
        Family::Exponential => {
            let scale = m - min;
            Ok(Candidate {
                params: FitParams {
                    shape: None,
                    loc: min,
                    scale,
                },
                log_likelihood: -n * scale.ln() - n,
            })
        }
        Family::LogNormal => profile_location(x, min, family, lognormal_at),
        Family::Weibull => profile_location(x, min, family, weibull_at),
        Family::Gamma => profile_location(x, min, family, gamma_at),
        Family::PowerLaw => {
            if min <= 0.0 {
                return Err(StatsError::SupportViolation(format!(
                    "power law requires positive samples (minimum {min})"
                )));
            }
            let sum_log: f64 = x.iter().map(|v| (v / min).ln()).sum();
            let alpha = 1.0 + n / sum_log;
            let ll = n * ((alpha - 1.0) / min).ln() - alpha * sum_log;
            Ok(Candidate {
                params: FitParams {
                    shape: Some(alpha),
                    loc: 0.0,
                    scale: min,
                },
                log_likelihood: ll,
            })
        }
        Family::ChiSquared => {
            if min <= 0.0 {
                return Err(StatsError::SupportViolation(format!(
                    "chi-squared requires positive samples (minimum {min})"
                )));
            }
            let df = chi_squared_df(x)
                .ok_or_else(|| StatsError::FitFailed("chi-squared degrees of freedom".into()))?;
            let dist = ChiSquared::new(df).map_err(|e| StatsError::FitFailed(e.to_string()))?;
            let ll = x.iter().map(|&v| dist.ln_pdf(v)).sum();
            Ok(Candidate {
                params: FitParams {
                    shape: Some(df),
                    loc: 0.0,
                    scale: 1.0,
                },
                log_likelihood: ll,
            })
        }
    }
}

/// Fits `family` by maximum likelihood and scores it with the KS statistic.
pub fn fit_distribution(samples: &[f64], family: Family) -> Result<DistributionFit, StatsError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(StatsError::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(StatsError::DegenerateSample);
    }
    let fitted = fit_params(samples, family)?;
    let params = fitted.params;
    if !(params.scale > 0.0) || !params.scale.is_finite() {
        return Err(StatsError::FitFailed(format!("{family}: non-positive scale")));
    }
    let ks = one_sample_ks(samples, |x| cdf(family, &params, x))?;
    if !ks.statistic.is_finite() {
        return Err(StatsError::FitFailed(format!("{family}: CDF undefined")));
    }
    Ok(DistributionFit {
        family,
        params,
        ks_statistic: ks.statistic,
        p_value: ks.p_value,
        sample_size: samples.len(),
        log_likelihood: fitted.log_likelihood,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FamilyRanking {
    /// Successful fits by ascending KS statistic.
    pub ranked: Vec<DistributionFit>,
    pub unfit: Vec<(Family, StatsError)>,
}

impl FamilyRanking {
    pub fn best(&self) -> Option<&DistributionFit> {
        self.ranked.first()
    }
}

pub fn select_best_family(samples: &[f64], families: &[Family]) -> FamilyRanking {
    let mut out = FamilyRanking::default();
    for &f in families {
        match fit_distribution(samples, f) {
            Ok(fit) => out.ranked.push(fit),
            Err(e) => out.unfit.push((f, e)),
        }
    }
    out.ranked.sort_by(|a, b| {
        a.ks_statistic
            .total_cmp(&b.ks_statistic)
            .then_with(|| a.family.cmp(&b.family))
    });
    out
}
