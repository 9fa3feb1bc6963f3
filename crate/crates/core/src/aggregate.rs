//! Multi-scale aggregation of tract measures and crosswalk apportionment.
//!
//! Weighted means are carried as `(Σ w·x, Σ w)` pairs until finalised, so
//! partial aggregates merge associatively.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::dispersion::{gini_stu, GiniUnit};
use crate::ingest::{Crosswalk, GeoHierarchy, Strictness};
use crate::measures::FoundationalStu;
use crate::{CategoryValues, DiagnosticKind, Diagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Tract,
    CountySubdivision,
    County,
    Metro,
}

impl Level {
    pub const ALL: [Level; 4] = [
        Level::Tract,
        Level::CountySubdivision,
        Level::County,
        Level::Metro,
    ];

    /// Output folder name.
    pub fn name(self) -> &'static str {
        match self {
            Level::Tract => "tract",
            Level::CountySubdivision => "county_subdivision",
            Level::County => "county",
            Level::Metro => "metro",
        }
    }

    pub fn geoid_len(self) -> usize {
        match self {
            Level::Tract => 11,
            Level::CountySubdivision => 10,
            Level::County | Level::Metro => 5,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tract" => Ok(Level::Tract),
            "county_subdivision" | "cousub" | "subdivision" => Ok(Level::CountySubdivision),
            "county" => Ok(Level::County),
            "metro" | "cbsa" => Ok(Level::Metro),
            other => Err(format!("unknown level '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AggregationKey {
    pub level: Level,
    pub geoid: String,
    pub week_start: NaiveDate,
}

impl AggregationKey {
    pub fn new(level: Level, geoid: impl Into<String>, week_start: NaiveDate) -> Self {
        let geoid = geoid.into();
        debug_assert_eq!(geoid.len(), level.geoid_len(), "{level} GEOID {geoid}");
        AggregationKey {
            level,
            geoid,
            week_start,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("source GEOID {0} has no crosswalk entry")]
    UnmappedSource(String),
}

/// Running weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightedMean {
    pub sum_wx: f64,
    pub sum_w: f64,
}

impl WeightedMean {
    pub fn add(&mut self, x: f64, w: f64) {
        self.sum_wx += w * x;
        self.sum_w += w;
    }

    pub fn merge(&mut self, other: WeightedMean) {
        self.sum_wx += other.sum_wx;
        self.sum_w += other.sum_w;
    }

    pub fn value(&self) -> Option<f64> {
        (self.sum_w > 0.0).then(|| self.sum_wx / self.sum_w)
    }
}

pub type UnitValues<T> = BTreeMap<AggregationKey, T>;

fn by_unit<'a, T>(
    tracts: &'a [T],
    tract_of: impl Fn(&T) -> (&str, NaiveDate),
    hierarchy: &'a GeoHierarchy,
    level: Level,
    diags: &mut Diagnostics,
) -> BTreeMap<AggregationKey, Vec<&'a T>> {
    let mut out: BTreeMap<AggregationKey, Vec<&T>> = BTreeMap::new();
    for t in tracts {
        let (tract, week) = tract_of(t);
        if level != Level::Tract && hierarchy.membership(tract).is_none() {
            diags.push(
                DiagnosticKind::TractNotInHierarchy,
                format!("{tract}@{week}"),
                format!("excluded from {level} aggregates"),
            );
            continue;
        }
        if let Some(unit) = hierarchy.unit_of(tract, level) {
            out.entry(AggregationKey::new(level, unit, week))
                .or_default()
                .push(t);
        }
    }
    out
}

fn finish(
    key: &AggregationKey,
    acc: CategoryValues<WeightedMean>,
    what: &str,
    diags: &mut Diagnostics,
) -> CategoryValues<Option<f64>> {
    let values = acc.map(|m| m.value());
    if values.all.is_none() {
        diags.push(
            DiagnosticKind::EmptyUnit,
            format!("{}:{}@{}", key.level, key.geoid, key.week_start),
            format!("no contributing tracts for {what}"),
        );
    }
    values
}

/// Device-weighted mean of per-user STU over member tracts.
///
/// Tracts with absent per-user values are left out of both sums, so the
/// result equals Σ T / Σ D over the contributing tracts.
pub fn aggregate_per_user(
    tracts: &[FoundationalStu],
    hierarchy: &GeoHierarchy,
    level: Level,
    diags: &mut Diagnostics,
) -> UnitValues<CategoryValues<Option<f64>>> {
    let groups = by_unit(
        tracts,
        |t| (t.tract_geoid.as_str(), t.week_start),
        hierarchy,
        level,
        diags,
    );
    let mut out = BTreeMap::new();
    for (key, members) in groups {
        let mut acc = CategoryValues::<WeightedMean>::default();
        for t in members {
            let d = t.device_count.unwrap_or(0) as f64;
            if let Some(v) = t.per_user.all {
                acc.all.add(v, d);
            }
            for (slot, v) in acc.by_category.iter_mut().zip(t.per_user.by_category) {
                if let Some(v) = v {
                    slot.add(v, d);
                }
            }
        }
        let values = finish(&key, acc, "per-user STU", diags);
        out.insert(key, values);
    }
    out
}

/// Visit-weighted mean of per-visit STU. Each category is weighted by the
/// tract's attributed visits in that category (total visits for `All`), so
/// the result equals Σ T / Σ V.
pub fn aggregate_per_visit(
    tracts: &[FoundationalStu],
    hierarchy: &GeoHierarchy,
    level: Level,
    diags: &mut Diagnostics,
) -> UnitValues<CategoryValues<Option<f64>>> {
    let groups = by_unit(
        tracts,
        |t| (t.tract_geoid.as_str(), t.week_start),
        hierarchy,
        level,
        diags,
    );
    let mut out = BTreeMap::new();
    for (key, members) in groups {
        let mut acc = CategoryValues::<WeightedMean>::default();
        for t in members {
            if let Some(v) = t.per_visit.all {
                acc.all.add(v, t.total_attributed_visits());
            }
            for (i, slot) in acc.by_category.iter_mut().enumerate() {
                if let Some(v) = t.per_visit.by_category[i] {
                    slot.add(v, t.category_visits[i]);
                }
            }
        }
        let values = finish(&key, acc, "per-visit STU", diags);
        out.insert(key, values);
    }
    out
}

/// Tract diversity with the device count used as its aggregation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TractDiversity {
    pub tract_geoid: String,
    pub week_start: NaiveDate,
    pub diversity: Option<f64>,
    pub device_count: Option<u64>,
}

/// Device-weighted mean of tract diversity. This is not the entropy of the
/// pooled sector profile.
pub fn aggregate_diversity(
    tracts: &[TractDiversity],
    hierarchy: &GeoHierarchy,
    level: Level,
    diags: &mut Diagnostics,
) -> UnitValues<Option<f64>> {
    let groups = by_unit(
        tracts,
        |t| (t.tract_geoid.as_str(), t.week_start),
        hierarchy,
        level,
        diags,
    );
    groups
        .into_iter()
        .map(|(key, members)| {
            let mut acc = WeightedMean::default();
            for t in members {
                if let (Some(h), Some(d)) = (t.diversity, t.device_count) {
                    acc.add(h, d as f64);
                }
            }
            let value = acc.value();
            if value.is_none() {
                diags.push(
                    DiagnosticKind::EmptyUnit,
                    format!("{}:{}@{}", key.level, key.geoid, key.week_start),
                    "no contributing tracts for diversity",
                );
            }
            (key, value)
        })
        .collect()
}

/// Tract inputs for a regional Gini.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGiniInput {
    pub tract_geoid: String,
    pub week_start: NaiveDate,
    pub per_user: Option<f64>,
    pub population: Option<f64>,
}

/// Gini of per-user STU across the member tracts of each unit.
///
/// Tracts lacking a per-user value or a population are left out; units that
/// end up degenerate are reported absent with a diagnostic.
pub fn compute_region_gini(
    tracts: &[RegionGiniInput],
    hierarchy: &GeoHierarchy,
    level: Level,
    diags: &mut Diagnostics,
) -> UnitValues<Option<f64>> {
    let groups = by_unit(
        tracts,
        |t| (t.tract_geoid.as_str(), t.week_start),
        hierarchy,
        level,
        diags,
    );
    groups
        .into_iter()
        .map(|(key, members)| {
            let units: Vec<GiniUnit> = members
                .iter()
                .filter_map(|t| {
                    Some(GiniUnit {
                        geoid: t.tract_geoid.clone(),
                        population: t.population?,
                        per_user: t.per_user?,
                    })
                })
                .collect();
            let value = match gini_stu(&units) {
                Ok(g) => Some(g),
                Err(e) => {
                    diags.push(
                        DiagnosticKind::DegenerateRegion,
                        format!("{}:{}@{}", key.level, key.geoid, key.week_start),
                        e.to_string(),
                    );
                    None
                }
            };
            (key, value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrosswalkResult {
    pub values: BTreeMap<String, f64>,
    pub unmapped: Vec<String>,
}

/// Apportions additive values from source to target GEOIDs.
pub fn apply_crosswalk(
    values: &BTreeMap<String, f64>,
    crosswalk: &Crosswalk,
    strictness: Strictness,
    diags: &mut Diagnostics,
) -> Result<CrosswalkResult, AggregateError> {
    let by_source = crosswalk.by_source();
    let mut result = CrosswalkResult::default();
    for (source, &value) in values {
        match by_source.get(source.as_str()) {
            Some(targets) => {
                for w in targets {
                    *result.values.entry(w.target_geoid.clone()).or_default() += value * w.weight;
                }
            }
            None => {
                if strictness == Strictness::Strict {
                    return Err(AggregateError::UnmappedSource(source.clone()));
                }
                diags.push(
                    DiagnosticKind::UnmappedSource,
                    source.clone(),
                    "no crosswalk entry; value dropped",
                );
                result.unmapped.push(source.clone());
            }
        }
    }
    Ok(result)
}
