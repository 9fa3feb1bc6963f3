//! Shannon diversity of time use and the population-weighted Gini of per-user
//! time use.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::ingest::Naics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("profile has no sector with positive minutes")]
    EmptyProfile,
    #[error("negative or non-finite value: {0}")]
    InvalidValue(f64),
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
}

/// Minutes per NAICS sector for one tract-week.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorTimeProfile {
    pub tract_geoid: String,
    pub week_start: NaiveDate,
    pub sector_minutes: BTreeMap<Naics, f64>,
}

/// −Σ p ln p over the positive entries of `weights`, with p the normalised
/// weights. Zero entries contribute nothing.
pub fn shannon_entropy<I>(weights: I) -> Result<f64, DispersionError>
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = weights.into_iter();
    let mut total = 0.0;
    for w in iter.clone() {
        if !w.is_finite() || w < 0.0 {
            return Err(DispersionError::InvalidValue(w));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(DispersionError::EmptyProfile);
    }
    let h: f64 = iter
        .filter(|&w| w > 0.0)
        .map(|w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum();
    // A single sector gives -1·ln 1 = -0.0.
    Ok(h.max(0.0))
}

/// Shannon diversity (natural log) of a tract's time across sectors.
pub fn shannon_diversity(profile: &SectorTimeProfile) -> Result<f64, DispersionError> {
    shannon_entropy(profile.sector_minutes.values().copied())
}

/// One neighbourhood entering a regional Gini.
#[derive(Debug, Clone, PartialEq)]
pub struct GiniUnit {
    pub geoid: String,
    pub population: f64,
    pub per_user: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzPoint {
    pub geoid: String,
    pub population_share: f64,
    pub per_user_value: f64,
    /// Cumulative population share up to and including this point.
    pub cumulative_population_share: f64,
    /// Cumulative share of STU mass (population × per-user value).
    pub cumulative_stu_share: f64,
}

fn validate(units: &[GiniUnit]) -> Result<(f64, f64), DispersionError> {
    if units.len() < 2 {
        return Err(DispersionError::DegenerateRegion(format!(
            "{} unit(s); at least 2 required",
            units.len()
        )));
    }
    let mut pop = 0.0;
    let mut mass = 0.0;
    for u in units {
        for v in [u.population, u.per_user] {
            if !v.is_finite() || v < 0.0 {
                return Err(DispersionError::InvalidValue(v));
            }
        }
        pop += u.population;
        mass += u.population * u.per_user;
    }
    if pop <= 0.0 {
        return Err(DispersionError::DegenerateRegion("zero total population".into()));
    }
    if mass <= 0.0 {
        return Err(DispersionError::DegenerateRegion("all-zero STU".into()));
    }
    Ok((pop, mass))
}

/// Lorenz curve ordered by ascending per-user value (ties by GEOID).
pub fn lorenz_curve(units: &[GiniUnit]) -> Result<Vec<LorenzPoint>, DispersionError> {
    let (pop, mass) = validate(units)?;
    let mut sorted: Vec<&GiniUnit> = units.iter().collect();
    sorted.sort_by(|a, b| {
        a.per_user
            .partial_cmp(&b.per_user)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.geoid.cmp(&b.geoid))
    });
    let mut cum_pop = 0.0;
    let mut cum_mass = 0.0;
    let n = sorted.len();
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            cum_pop += u.population;
            cum_mass += u.population * u.per_user;
            let last = i + 1 == n;
            LorenzPoint {
                geoid: u.geoid.clone(),
                population_share: u.population / pop,
                per_user_value: u.per_user,
                cumulative_population_share: if last { 1.0 } else { cum_pop / pop },
                cumulative_stu_share: if last { 1.0 } else { cum_mass / mass },
            }
        })
        .collect())
}

/// Population-weighted Gini of per-user STU: one minus twice the area under
/// the Lorenz curve, integrated with trapezoids.
pub fn gini_stu(units: &[GiniUnit]) -> Result<f64, DispersionError> {
    let curve = lorenz_curve(units)?;
    let mut prev_x = 0.0;
    let mut prev_y = 0.0;
    let mut area2 = 0.0;
    for p in &curve {
        area2 += (p.cumulative_population_share - prev_x) * (p.cumulative_stu_share + prev_y);
        prev_x = p.cumulative_population_share;
        prev_y = p.cumulative_stu_share;
    }
    Ok((1.0 - area2).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(minutes: &[f64]) -> SectorTimeProfile {
        let codes = ["722511", "722513", "813110", "445110", "713940", "711211"];
        SectorTimeProfile {
            tract_geoid: "12057010100".into(),
            week_start: NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(),
            sector_minutes: minutes
                .iter()
                .zip(codes)
                .map(|(&m, c)| (c.parse().unwrap(), m))
                .collect(),
        }
    }

    fn units(pairs: &[(f64, f64)]) -> Vec<GiniUnit> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(pop, v))| GiniUnit {
                geoid: format!("{i:011}"),
                population: pop,
                per_user: v,
            })
            .collect()
    }

    /// Σ_i Σ_j p_i p_j |x_i − x_j| / (2μ) with population shares p.
    fn pairwise_gini(u: &[GiniUnit]) -> f64 {
        let pop: f64 = u.iter().map(|x| x.population).sum();
        let mu: f64 = u.iter().map(|x| x.population / pop * x.per_user).sum();
        let mut s = 0.0;
        for a in u {
            for b in u {
                s += (a.population / pop) * (b.population / pop) * (a.per_user - b.per_user).abs();
            }
        }
        s / (2.0 * mu)
    }

    #[test]
    fn shannon_closed_forms() {
        assert_eq!(shannon_diversity(&profile(&[17.0])).unwrap(), 0.0);
        let h = shannon_diversity(&profile(&[3.0, 3.0])).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
        let h = shannon_diversity(&profile(&[2.0, 1.0, 1.0])).unwrap();
        assert!((h - 1.0397207708399179).abs() < 1e-12);
        assert!((h - 1.039721).abs() < 5e-7);
    }

    #[test]
    fn shannon_empty_profile() {
        assert_eq!(
            shannon_diversity(&profile(&[])).unwrap_err(),
            DispersionError::EmptyProfile
        );
        assert_eq!(
            shannon_diversity(&profile(&[0.0, 0.0])).unwrap_err(),
            DispersionError::EmptyProfile
        );
    }

    #[test]
    fn gini_equal_values_is_zero() {
        let g = gini_stu(&units(&[(1.0, 7.0); 4])).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn gini_one_of_four() {
        let g = gini_stu(&units(&[(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 1.0)])).unwrap();
        assert_eq!(g, 0.75);
        assert_eq!(pairwise_gini(&units(&[(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 1.0)])), 0.75);
    }

    #[test]
    fn gini_degenerate_regions() {
        assert!(matches!(gini_stu(&units(&[(1.0, 1.0)])), Err(DispersionError::DegenerateRegion(_))));
        assert!(matches!(
            gini_stu(&units(&[(0.0, 1.0), (0.0, 2.0)])),
            Err(DispersionError::DegenerateRegion(_))
        ));
        assert!(matches!(
            gini_stu(&units(&[(1.0, 0.0), (2.0, 0.0)])),
            Err(DispersionError::DegenerateRegion(_))
        ));
        assert!(matches!(
            gini_stu(&units(&[(1.0, -1.0), (2.0, 1.0)])),
            Err(DispersionError::InvalidValue(_))
        ));
    }

    #[test]
    fn lorenz_curve_shape() {
        let curve = lorenz_curve(&units(&[(2.0, 3.0), (1.0, 1.0), (1.0, 3.0)])).unwrap();
        assert_eq!(curve[0].per_user_value, 1.0);
        // Ties broken by GEOID.
        assert_eq!(curve[1].geoid, "00000000000");
        let total: f64 = curve.iter().map(|p| p.population_share).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(curve.windows(2).all(|w| w[1].cumulative_stu_share >= w[0].cumulative_stu_share));
        assert_eq!(curve.last().unwrap().cumulative_stu_share, 1.0);
    }

    /// The printed regional formula 1 − 2 Σ P_pop,i · Y_i · (T_i − T_{i−1})
    /// evaluated literally (T_0 = 0). It is not scale invariant, unlike the
    /// Lorenz Gini implemented above.
    fn printed_formula(u: &[GiniUnit]) -> f64 {
        let curve = lorenz_curve(u).unwrap();
        let mut prev = 0.0;
        let mut s = 0.0;
        for p in &curve {
            s += p.population_share * p.cumulative_stu_share * (p.per_user_value - prev);
            prev = p.per_user_value;
        }
        1.0 - 2.0 * s
    }

    #[test]
    fn printed_formula_diverges_from_lorenz_gini() {
        let base = units(&[(1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let scaled: Vec<GiniUnit> = base
            .iter()
            .map(|u| GiniUnit { per_user: u.per_user * 10.0, ..u.clone() })
            .collect();
        assert_eq!(printed_formula(&base), 0.5);
        assert_eq!(printed_formula(&scaled), -4.0);
        assert_eq!(gini_stu(&base).unwrap(), gini_stu(&scaled).unwrap());
    }

    fn arb_units() -> impl Strategy<Value = Vec<GiniUnit>> {
        proptest::collection::vec((0.1f64..1e4, 0.0f64..500.0), 2..60).prop_map(|v| {
            let mut u = units(&v);
            u[0].per_user += 1.0;
            u
        })
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise_oracle(u in arb_units()) {
            let g = gini_stu(&u).unwrap();
            prop_assert!((g - pairwise_gini(&u)).abs() < 1e-12);
            prop_assert!((0.0..1.0).contains(&g));
        }

        #[test]
        fn gini_scale_and_permutation_invariant(u in arb_units(), c in 1e-3f64..1e3, rot in 0usize..60) {
            let g = gini_stu(&u).unwrap();
            let scaled: Vec<_> = u.iter().map(|x| GiniUnit { per_user: x.per_user * c, ..x.clone() }).collect();
            prop_assert!((gini_stu(&scaled).unwrap() - g).abs() < 1e-12);
            let mut rotated = u.clone();
            let r = rot % rotated.len();
            rotated.rotate_left(r);
            prop_assert!((gini_stu(&rotated).unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn gini_merge_of_equal_units(u in arb_units(), extra in 0.1f64..1e3) {
            let g = gini_stu(&u).unwrap();
            let mut split = u.clone();
            let mut twin = u[0].clone();
            twin.geoid = "99999999999".into();
            twin.population = extra;
            split.push(twin);
            let mut merged = u.clone();
            merged[0].population += extra;
            prop_assert!((gini_stu(&split).unwrap() - gini_stu(&merged).unwrap()).abs() < 1e-12);
            let _ = g;
        }

        #[test]
        fn gini_increases_under_regressive_transfer(a in 1.0f64..100.0, b in 1.0f64..100.0, t in 0.01f64..1.0) {
            let (lo, hi) = if a <= b { (a, b + 0.5) } else { (b, a + 0.5) };
            let before = units(&[(1.0, lo), (1.0, hi)]);
            let delta = t * lo;
            let after = units(&[(1.0, lo - delta), (1.0, hi + delta)]);
            prop_assert!(gini_stu(&after).unwrap() > gini_stu(&before).unwrap());
        }

        #[test]
        fn shannon_rescaling_and_zero_sector(m in proptest::collection::vec(0.01f64..1e3, 1..6), c in 1e-3f64..1e6) {
            let h = shannon_diversity(&profile(&m)).unwrap();
            let scaled: Vec<f64> = m.iter().map(|x| x * c).collect();
            prop_assert!((shannon_diversity(&profile(&scaled)).unwrap() - h).abs() < 1e-12);
            let ln_m = (m.len() as f64).ln();
            prop_assert!(h <= ln_m + 1e-12);
            if m.len() < 6 {
                let mut with_zero = m.clone();
                with_zero.push(0.0);
                prop_assert!((shannon_diversity(&profile(&with_zero)).unwrap() - h).abs() < 1e-15);
            }
        }
    }
}
