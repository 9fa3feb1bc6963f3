//! Expected dwell time per POI, co-located POI deduplication, tract-level
//! time totals and the per-user / per-visit measures.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use thiserror::Error;

use crate::ingest::{
    cbg_to_tract, CategoryMap, DwellBucket, Naics, PanelIndex, PoiCatalog, Strictness,
    WeeklyPattern, YearMonth,
};
use crate::{ActivityCategory, CategoryValues, DiagnosticKind, Diagnostics};

pub const DEFAULT_OPEN_BUCKET_MINUTES: f64 = 240.0;

/// Midpoints of the bounded buckets read as closed minute ranges.
const BOUNDED_MIDPOINTS: [f64; 6] = [2.0, 7.5, 15.5, 40.5, 90.5, 180.5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid dwell policy: {0}")]
    InvalidPolicy(String),
    #[error("co-located group '{key}' mixes weeks {first} and {other}")]
    MixedWeeksInGroup {
        key: String,
        first: NaiveDate,
        other: NaiveDate,
    },
    #[error("POI '{poi_id}' (week {week}) is not in the catalog")]
    UnknownPoi { poi_id: String, week: NaiveDate },
    #[error("no panel record for tract {tract} in {month}")]
    MissingPanelMonth { tract: String, month: YearMonth },
}

/// Representative minutes assigned to a visit in each dwell bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellPolicy {
    minutes: [f64; 7],
}

impl Default for DwellPolicy {
    fn default() -> Self {
        Self::with_open_bucket(DEFAULT_OPEN_BUCKET_MINUTES).expect("default policy is valid")
    }
}

impl DwellPolicy {
    pub fn new(minutes: [f64; 7]) -> Result<Self, MeasureError> {
        if minutes.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(MeasureError::InvalidPolicy(
                "representative minutes must be positive".into(),
            ));
        }
        if minutes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MeasureError::InvalidPolicy(
                "representative minutes must be strictly increasing".into(),
            ));
        }
        if minutes[6] < DEFAULT_OPEN_BUCKET_MINUTES {
            return Err(MeasureError::InvalidPolicy(format!(
                "open bucket value {} is below 240",
                minutes[6]
            )));
        }
        Ok(DwellPolicy { minutes })
    }

    /// Midpoints for the bounded buckets and `open` for ">240".
    pub fn with_open_bucket(open: f64) -> Result<Self, MeasureError> {
        let mut m = [0.0; 7];
        m[..6].copy_from_slice(&BOUNDED_MIDPOINTS);
        m[6] = open;
        Self::new(m)
    }

    /// Parses seven comma-separated reals.
    pub fn parse_list(text: &str) -> Result<Self, MeasureError> {
        let values: Vec<f64> = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MeasureError::InvalidPolicy(e.to_string()))?;
        let minutes: [f64; 7] = values.try_into().map_err(|v: Vec<f64>| {
            MeasureError::InvalidPolicy(format!("expected 7 values, got {}", v.len()))
        })?;
        Self::new(minutes)
    }

    pub fn representative(&self, bucket: DwellBucket) -> f64 {
        self.minutes[bucket.index()]
    }

    pub fn minutes(&self) -> [f64; 7] {
        self.minutes
    }
}

/// Total visit minutes of one POI-week: Σ representative × bucket count.
pub fn expected_poi_dwell_total(pattern: &WeeklyPattern, policy: &DwellPolicy) -> f64 {
    DwellBucket::ALL
        .iter()
        .map(|&b| policy.representative(b) * pattern.dwell_buckets.count(b))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColocatedGroup {
    pub patterns: Vec<WeeklyPattern>,
    /// False when members carried different count fields.
    pub identical: bool,
}

/// Scales every member of a co-located group by 1/g.
pub fn dedup_colocated(group: &[WeeklyPattern]) -> Result<ColocatedGroup, MeasureError> {
    let Some(first) = group.first() else {
        return Ok(ColocatedGroup {
            patterns: Vec::new(),
            identical: true,
        });
    };
    if let Some(other) = group.iter().find(|p| p.week_start != first.week_start) {
        return Err(MeasureError::MixedWeeksInGroup {
            key: first.poi_id.clone(),
            first: first.week_start,
            other: other.week_start,
        });
    }
    if group.len() == 1 {
        return Ok(ColocatedGroup {
            patterns: group.to_vec(),
            identical: true,
        });
    }
    let factor = 1.0 / group.len() as f64;
    Ok(ColocatedGroup {
        patterns: group.iter().map(|p| p.scaled(factor)).collect(),
        identical: group.iter().all(|p| p.same_counts(first)),
    })
}

/// Groups patterns by (colocation key, week) and applies [`dedup_colocated`].
///
/// Output keeps input order. POIs missing from the catalog form their own
/// group.
pub fn dedup_by_colocation(
    patterns: Vec<WeeklyPattern>,
    catalog: &PoiCatalog,
    diags: &mut Diagnostics,
) -> Vec<WeeklyPattern> {
    let key_of = |p: &WeeklyPattern| {
        let key = catalog
            .get(&p.poi_id)
            .map_or(p.poi_id.as_str(), |r| r.colocation_key.as_str());
        (key.to_string(), p.week_start)
    };
    let mut groups: BTreeMap<(String, NaiveDate), Vec<usize>> = BTreeMap::new();
    for (i, p) in patterns.iter().enumerate() {
        groups.entry(key_of(p)).or_default().push(i);
    }
    let mut factor = vec![1.0; patterns.len()];
    for ((key, week), members) in &groups {
        if members.len() < 2 {
            continue;
        }
        let first = &patterns[members[0]];
        if !members.iter().all(|&i| patterns[i].same_counts(first)) {
            diags.push(
                DiagnosticKind::NonIdenticalColocatedGroup,
                format!("{key}@{week}"),
                format!("{} members scaled by 1/{}", members.len(), members.len()),
            );
        }
        let f = 1.0 / members.len() as f64;
        for &i in members {
            factor[i] = f;
        }
    }
    patterns
        .into_iter()
        .zip(factor)
        .map(|(p, f)| if f == 1.0 { p } else { p.scaled(f) })
        .collect()
}

/// Time and attributed visits of one tract-week, split by category and by
/// NAICS sector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TractAccumulator {
    pub minutes: [f64; 7],
    pub visits: [f64; 7],
    pub sector_minutes: BTreeMap<Naics, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractCategoryTime {
    pub tract_geoid: String,
    pub week_start: NaiveDate,
    pub category: ActivityCategory,
    pub total_minutes: f64,
    pub attributed_visits: f64,
}

/// Tract-week accumulators keyed by (week, tract).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TractTimeTable {
    pub cells: BTreeMap<(NaiveDate, String), TractAccumulator>,
}

impl TractTimeTable {
    pub fn get(&self, week: NaiveDate, tract: &str) -> Option<&TractAccumulator> {
        self.cells.get(&(week, tract.to_string()))
    }

    pub fn weeks(&self) -> BTreeSet<NaiveDate> {
        self.cells.keys().map(|(w, _)| *w).collect()
    }

    /// One record per (tract, week, category) with attributed visits.
    pub fn records(&self) -> Vec<TractCategoryTime> {
        let mut out = Vec::new();
        for ((week, tract), acc) in &self.cells {
            for c in ActivityCategory::ALL {
                if acc.visits[c.index()] > 0.0 || acc.minutes[c.index()] > 0.0 {
                    out.push(TractCategoryTime {
                        tract_geoid: tract.clone(),
                        week_start: *week,
                        category: c,
                        total_minutes: acc.minutes[c.index()],
                        attributed_visits: acc.visits[c.index()],
                    });
                }
            }
        }
        out
    }
}

/// Visitation-weighted tract time: each POI's total minutes are shared among
/// visitor-home tracts in proportion to their visits.
///
/// Visits without a home attribution stay in the POI's denominator but are
/// credited to no tract. POIs whose NAICS code is not in `category_map` are
/// outside the measure and are skipped.
pub fn tract_category_time(
    patterns: &[WeeklyPattern],
    catalog: &PoiCatalog,
    category_map: &CategoryMap,
    policy: &DwellPolicy,
    strictness: Strictness,
    diags: &mut Diagnostics,
) -> Result<TractTimeTable, MeasureError> {
    let mut table = TractTimeTable::default();
    let mut out_of_scope: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for p in patterns {
        let Some(poi) = catalog.get(&p.poi_id) else {
            if strictness == Strictness::Strict {
                return Err(MeasureError::UnknownPoi {
                    poi_id: p.poi_id.clone(),
                    week: p.week_start,
                });
            }
            diags.push(
                DiagnosticKind::UnknownPoi,
                format!("{}@{}", p.poi_id, p.week_start),
                "pattern skipped",
            );
            continue;
        };
        let Some(category) = category_map.category(&poi.naics) else {
            *out_of_scope.entry(p.week_start).or_default() += 1;
            continue;
        };
        let visits = p.raw_visits;
        if visits == 0.0 {
            continue;
        }
        let total = expected_poi_dwell_total(p, policy);
        if total == 0.0 {
            diags.push(
                DiagnosticKind::NoDwellInformation,
                format!("{}@{}", p.poi_id, p.week_start),
                format!("{visits} visits with an empty dwell histogram"),
            );
            continue;
        }
        let mut by_tract: BTreeMap<String, f64> = BTreeMap::new();
        for (cbg, &v) in &p.home_areas {
            // home-area keys are validated 12-digit GEOIDs at parse time
            let tract = cbg_to_tract(cbg).expect("validated block group");
            *by_tract.entry(tract).or_default() += v;
        }
        for (tract, v) in by_tract {
            if v == 0.0 {
                continue;
            }
            let minutes = total * (v / visits);
            let acc = table.cells.entry((p.week_start, tract)).or_default();
            acc.minutes[category.index()] += minutes;
            acc.visits[category.index()] += v;
            *acc.sector_minutes.entry(poi.naics.clone()).or_default() += minutes;
        }
    }
    for (week, n) in out_of_scope {
        diags.push(
            DiagnosticKind::OutOfScopePoi,
            week.to_string(),
            format!("{n} patterns with NAICS codes outside the category map"),
        );
    }
    Ok(table)
}

/// Per-user and per-visit measures of one tract-week.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundationalStu {
    pub tract_geoid: String,
    pub week_start: NaiveDate,
    /// Minutes per panel device per week; absent without a positive device count.
    pub per_user: CategoryValues<Option<f64>>,
    /// Minutes per attributed visit; absent where there were no visits.
    pub per_visit: CategoryValues<Option<f64>>,
    pub device_count: Option<u64>,
    pub population: Option<u64>,
    pub category_minutes: [f64; 7],
    pub category_visits: [f64; 7],
}

impl FoundationalStu {
    pub fn total_minutes(&self) -> f64 {
        self.category_minutes.iter().sum()
    }

    pub fn total_attributed_visits(&self) -> f64 {
        self.category_visits.iter().sum()
    }
}

/// Normalises tract-week time totals by the panel device count (month of the
/// week's Monday) and by attributed visits.
///
/// `extra_tracts` (typically every tract of the hierarchy) are emitted even
/// without visits when the panel covers them, so zero time use is reported
/// as 0 rather than omitted.
pub fn foundational_stu<'a>(
    table: &'a TractTimeTable,
    week: NaiveDate,
    extra_tracts: impl IntoIterator<Item = &'a str>,
    panel: &PanelIndex,
    strictness: Strictness,
    diags: &mut Diagnostics,
) -> Result<Vec<FoundationalStu>, MeasureError> {
    let mut tracts: BTreeSet<&str> = table
        .cells
        .range((week, String::new())..)
        .take_while(|((w, _), _)| *w == week)
        .map(|((_, t), _)| t.as_str())
        .collect();
    tracts.extend(extra_tracts);
    let empty = TractAccumulator::default();
    let mut out = Vec::with_capacity(tracts.len());
    for tract in tracts {
        let acc = table.get(week, tract);
        let obs = panel.for_week(tract, week);
        if acc.is_none() && obs.is_none() {
            continue;
        }
        let acc = acc.unwrap_or(&empty);
        let device_count = obs.map(|o| o.device_count);
        let key = format!("{tract}@{week}");
        let per_user = match device_count {
            Some(d) if d > 0 => {
                let d = d as f64;
                let by_category = acc.minutes.map(|m| Some(m / d));
                let all = by_category.iter().map(|v| v.unwrap_or(0.0)).sum();
                CategoryValues {
                    all: Some(all),
                    by_category,
                }
            }
            Some(_) => {
                diags.push(DiagnosticKind::ZeroDeviceCount, key, "per-user STU absent");
                CategoryValues::splat(None)
            }
            None => {
                if strictness == Strictness::Strict {
                    return Err(MeasureError::MissingPanelMonth {
                        tract: tract.to_string(),
                        month: YearMonth::of(week),
                    });
                }
                diags.push(
                    DiagnosticKind::MissingPanelMonth,
                    key,
                    format!("no panel record for {}; per-user STU absent", YearMonth::of(week)),
                );
                CategoryValues::splat(None)
            }
        };
        let total_visits: f64 = acc.visits.iter().sum();
        let total_minutes: f64 = acc.minutes.iter().sum();
        let mut per_visit = CategoryValues::splat(None);
        if total_visits > 0.0 {
            per_visit.all = Some(total_minutes / total_visits);
        }
        for c in ActivityCategory::ALL {
            let v = acc.visits[c.index()];
            if v > 0.0 {
                per_visit.set(c, Some(acc.minutes[c.index()] / v));
            }
        }
        out.push(FoundationalStu {
            tract_geoid: tract.to_string(),
            week_start: week,
            per_user,
            per_visit,
            device_count,
            population: obs.and_then(|o| o.population),
            category_minutes: acc.minutes,
            category_visits: acc.visits,
        });
    }
    Ok(out)
}

/// Weeks present in a pattern set, with the patterns of each week in input order.
pub fn split_by_week(patterns: Vec<WeeklyPattern>) -> BTreeMap<NaiveDate, Vec<WeeklyPattern>> {
    let mut out: BTreeMap<NaiveDate, Vec<WeeklyPattern>> = BTreeMap::new();
    for p in patterns {
        out.entry(p.week_start).or_default().push(p);
    }
    out
}
