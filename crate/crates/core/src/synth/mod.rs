//! Deterministic synthetic instances with a visit-level ground-truth ledger.
//!
//! An instance is a set of tracts grouped into counties, county subdivisions
//! and metros, a POI catalog whose POIs sit in "places" (a place with more
//! than one POI is a co-located group whose feed rows are duplicated), a
//! monthly device panel, and one ledger row per synthetic visit. Weekly
//! patterns are derived from the ledger by exact binning, so the ledger is
//! the only source of truth the [`oracle`](oracle_measures) needs.
//!
//! Each tract draws a weekly per-device time budget from a log-normal
//! (`intensity_shape`, `urban_scale` or `rural_scale`) and splits it across
//! categories by `category_weights` perturbed per tract. Visit counts are
//! chosen so that the expected bucketed minutes per device match that budget.
//!
//! Every random draw comes from a generator seeded by the root seed and the
//! entity path (tract, POI, week, category), so changing one count does not
//! reshuffle unrelated entities.

mod oracle;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal, Normal};
use thiserror::Error;

use crate::category::ActivityCategory;
use crate::ingest::{
    buckets_json, home_areas_json, write_category_map, write_crosswalk, write_hierarchy,
    write_panel, write_poi_catalog, write_weekly_patterns, CategoryMap, Crosswalk, CrosswalkWeight,
    DwellBucket, DwellHistogram, GeoHierarchy, IngestError, PanelObservation, PoiRecord,
    TractMembership, WeeklyPattern, YearMonth,
};
use crate::measures::DwellPolicy;
use crate::seed::rng_for;

pub use oracle::{
    compare_tables, oracle_measures, relative_close, DwellLoss, Mismatch, OracleInputs,
    OracleOutput,
};

/// NAICS codes emitted for each category, in category order.
pub const CATEGORY_NAICS: [&[&str]; 7] = [
    &["445110", "445131", "445230"],
    &["442110", "448140", "451120", "443142"],
    &["713940", "713910", "713950", "711211"],
    &["711310", "713110", "713990", "512131"],
    &["722511", "722513", "722515", "722410"],
    &["712110", "711110", "712130", "519120"],
    &["813110"],
];

/// Codes given to POIs outside the category map.
pub const OUT_OF_SCOPE_NAICS: &[&str] = &["531110", "621111", "541110", "522110"];

const TAG_TRACT: u64 = 1;
const TAG_POI: u64 = 2;
const TAG_WEEK: u64 = 3;
const TAG_VISITS: u64 = 4;
const TAG_BACKGROUND: u64 = 5;
const TAG_PANEL: u64 = 6;
const TAG_CORRUPT: u64 = 7;

const MAX_PLACE_SIZE: usize = 3;
const MAX_DWELL_MINUTES: u32 = 1440;
const PLACE_MEDIAN_SPREAD: f64 = 0.25;
const OUT_OF_SCOPE_MEDIAN: f64 = 30.0;
const PANEL_MONTHLY_SPREAD: f64 = 0.03;

pub const LEDGER_FILE: &str = "ledger.csv";
pub const LABELS_FILE: &str = "tract_labels.csv";
pub const CROSSWALK_FILE: &str = "crosswalk.csv";
pub const CONFIG_FILE: &str = "synth.toml";
pub const CORRUPTED_FILE: &str = "corrupted_rows.csv";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("cannot parse synth config: {0}")]
    ConfigSyntax(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Generator parameters. Every field has a default, so a TOML config only
/// needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Two-digit state FIPS prefix of every GEOID.
    pub state_fips: String,
    pub tracts: usize,
    pub tracts_per_county: usize,
    pub pois: usize,
    pub weeks: usize,
    /// Monday of the first week.
    pub start_week: NaiveDate,
    /// Each tract has between 1 and this many block groups.
    pub max_block_groups: usize,
    pub population_min: u64,
    pub population_max: u64,
    /// Devices per resident, drawn uniformly per tract.
    pub coverage_min: f64,
    pub coverage_max: f64,
    /// The last `zero_device_tracts` tracts report no panel devices.
    pub zero_device_tracts: usize,
    /// Log-normal shape of per-device weekly minutes across tracts.
    pub intensity_shape: f64,
    /// Log-normal scale (median) for tracts in metro counties.
    pub urban_scale: f64,
    /// Log-normal scale (median) for tracts outside metros.
    pub rural_scale: f64,
    /// Relative share of time per category (category order).
    pub category_weights: [f64; 7],
    /// Log-normal spread applied to each tract's category shares.
    pub category_spread: f64,
    /// Log-normal spread of a tract's budget from week to week.
    pub weekly_jitter: f64,
    /// Median exact dwell minutes per category.
    pub dwell_medians: [f64; 7],
    /// Log-normal shape of exact dwell minutes within a place.
    pub dwell_shape: f64,
    /// Share of visits without a home block group.
    pub unattributed_rate: f64,
    /// Chance that a POI joins the previous place instead of opening one.
    pub colocation_rate: f64,
    /// Share of POIs whose NAICS code is outside the category map.
    pub out_of_scope_rate: f64,
    /// Chance that a visit goes to a place in the visitor's home county.
    pub local_visit_share: f64,
    /// Number of pattern rows replaced by malformed rows when written.
    pub corrupt_rows: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            state_fips: "12".into(),
            tracts: 50,
            tracts_per_county: 10,
            pois: 500,
            weeks: 4,
            start_week: NaiveDate::from_ymd_opt(2023, 1, 16).expect("valid date"),
            max_block_groups: 3,
            population_min: 1000,
            population_max: 4000,
            coverage_min: 0.05,
            coverage_max: 0.15,
            zero_device_tracts: 1,
            intensity_shape: 0.6,
            urban_scale: 268.7,
            rural_scale: 155.3,
            category_weights: [0.14, 0.22, 0.12, 0.06, 0.30, 0.06, 0.10],
            category_spread: 0.3,
            weekly_jitter: 0.1,
            dwell_medians: [18.0, 25.0, 55.0, 95.0, 40.0, 70.0, 75.0],
            dwell_shape: 0.8,
            unattributed_rate: 0.05,
            colocation_rate: 0.05,
            out_of_scope_rate: 0.03,
            local_visit_share: 0.7,
            corrupt_rows: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig(msg.into())
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let config: SynthConfig =
            toml::from_str(text).map_err(|e| SynthError::ConfigSyntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.state_fips.len() != 2 || !crate::ingest::is_digits(&self.state_fips) {
            return Err(invalid("state_fips must be two digits"));
        }
        if self.tracts == 0 || self.tracts_per_county == 0 || self.tracts_per_county > 9000 {
            return Err(invalid("need tracts >= 1 and 1 <= tracts_per_county <= 9000"));
        }
        if self.tracts.div_ceil(self.tracts_per_county) > 499 {
            return Err(invalid("at most 499 counties"));
        }
        if self.pois < ActivityCategory::ALL.len() {
            return Err(invalid("need at least one POI per category (pois >= 7)"));
        }
        if self.weeks == 0 {
            return Err(invalid("weeks must be positive"));
        }
        if self.start_week.weekday() != Weekday::Mon {
            return Err(invalid(format!("start_week {} is not a Monday", self.start_week)));
        }
        if !(1..=9).contains(&self.max_block_groups) {
            return Err(invalid("max_block_groups must be between 1 and 9"));
        }
        if self.population_min == 0 || self.population_min > self.population_max {
            return Err(invalid("need 0 < population_min <= population_max"));
        }
        if !(self.coverage_min > 0.0
            && self.coverage_min <= self.coverage_max
            && self.coverage_max <= crate::ingest::MAX_COVERAGE_RATE)
        {
            return Err(invalid("need 0 < coverage_min <= coverage_max <= 1.5"));
        }
        if self.zero_device_tracts > self.tracts {
            return Err(invalid("zero_device_tracts exceeds tracts"));
        }
        for (name, v) in [
            ("intensity_shape", self.intensity_shape),
            ("urban_scale", self.urban_scale),
            ("rural_scale", self.rural_scale),
            ("dwell_shape", self.dwell_shape),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("category_spread", self.category_spread),
            ("weekly_jitter", self.weekly_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be nonnegative")));
            }
        }
        if self.category_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("category_weights must be positive"));
        }
        if self.dwell_medians.iter().any(|m| !(*m >= 1.0 && m.is_finite())) {
            return Err(invalid("dwell_medians must be at least 1 minute"));
        }
        for (name, v) in [
            ("unattributed_rate", self.unattributed_rate),
            ("colocation_rate", self.colocation_rate),
            ("out_of_scope_rate", self.out_of_scope_rate),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(format!("{name} must be in [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.local_visit_share) {
            return Err(invalid("local_visit_share must be in [0, 1]"));
        }
        if self.corrupt_rows > self.pois * self.weeks {
            return Err(invalid("corrupt_rows exceeds the number of pattern rows"));
        }
        Ok(())
    }

    pub fn week_starts(&self) -> Vec<NaiveDate> {
        (0..self.weeks)
            .map(|w| self.start_week + Duration::weeks(w as i64))
            .collect()
    }

    fn county_geoid(&self, county: usize) -> String {
        format!("{}{:03}", self.state_fips, 2 * county + 1)
    }

    fn metro_of(&self, county: usize) -> Option<String> {
        (county % 3 != 2).then(|| format!("{:05}", 10000 + 20 * (county / 2)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaLabel {
    Urban,
    Rural,
}

impl AreaLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AreaLabel::Urban => "urban",
            AreaLabel::Rural => "rural",
        }
    }
}

/// One synthetic visit. `home_cbg` is absent for unattributed visits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerVisit {
    pub week_start: NaiveDate,
    pub place_id: String,
    pub home_cbg: Option<String>,
    pub dwell_minutes: u32,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub pois: Vec<PoiRecord>,
    pub patterns: Vec<WeeklyPattern>,
    pub panel: Vec<PanelObservation>,
    pub category_map: CategoryMap,
    pub hierarchy: GeoHierarchy,
    pub crosswalk: Crosswalk,
    pub ledger: Vec<LedgerVisit>,
    pub labels: BTreeMap<String, AreaLabel>,
}

struct TractSpec {
    geoid: String,
    county: usize,
    cbgs: Vec<String>,
    population: u64,
    coverage: f64,
    intensity: f64,
    shares: [f64; 7],
}

struct PlaceSpec {
    id: String,
    category: Option<ActivityCategory>,
    county: usize,
    dwell_median: f64,
}

struct PoiSpec {
    record: PoiRecord,
    place: usize,
}

#[derive(Clone, Copy)]
struct Draw {
    home: Option<(usize, usize)>,
    minutes: u32,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn build_tracts(c: &SynthConfig) -> Vec<TractSpec> {
    (0..c.tracts)
        .map(|t| {
            let mut rng = rng_for(c.seed, &[TAG_TRACT, t as u64]);
            let county = t / c.tracts_per_county;
            let within = t % c.tracts_per_county;
            let geoid = format!("{}{:04}00", c.county_geoid(county), 100 + within);
            let n_bg = rng.random_range(1..=c.max_block_groups);
            let cbgs = (1..=n_bg).map(|b| format!("{geoid}{b}")).collect();
            let population = rng.random_range(c.population_min..=c.population_max);
            let coverage = rng.random_range(c.coverage_min..=c.coverage_max);
            let scale = if c.metro_of(county).is_some() {
                c.urban_scale
            } else {
                c.rural_scale
            };
            let intensity = scale * (c.intensity_shape * normal(&mut rng)).exp();
            let raw: [f64; 7] = std::array::from_fn(|k| {
                c.category_weights[k] * (c.category_spread * normal(&mut rng)).exp()
            });
            let total: f64 = raw.iter().sum();
            TractSpec {
                geoid,
                county,
                cbgs,
                population,
                coverage,
                intensity,
                shares: raw.map(|r| r / total),
            }
        })
        .collect()
}

fn build_pois(c: &SynthConfig, tracts: &[TractSpec]) -> (Vec<PoiSpec>, Vec<PlaceSpec>) {
    let weights = WeightedIndex::new(c.category_weights).expect("validated weights");
    let mut places: Vec<PlaceSpec> = Vec::new();
    let mut pois: Vec<PoiSpec> = Vec::new();
    let mut last_size = 0;
    for p in 0..c.pois {
        let mut rng = rng_for(c.seed, &[TAG_POI, p as u64]);
        let forced = p < ActivityCategory::ALL.len();
        let in_scope = forced || rng.random::<f64>() >= c.out_of_scope_rate;
        let category = if forced {
            Some(ActivityCategory::ALL[p])
        } else if in_scope {
            Some(ActivityCategory::ALL[weights.sample(&mut rng)])
        } else {
            None
        };
        let codes = category.map_or(OUT_OF_SCOPE_NAICS, |k| CATEGORY_NAICS[k.index()]);
        let naics = codes[rng.random_range(0..codes.len())];
        let joins = !forced
            && !places.is_empty()
            && last_size < MAX_PLACE_SIZE
            && rng.random::<f64>() < c.colocation_rate;
        let tract = rng.random_range(0..tracts.len());
        let median_noise = (PLACE_MEDIAN_SPREAD * normal(&mut rng)).exp();
        let place = if joins {
            last_size += 1;
            places.len() - 1
        } else {
            let median = category.map_or(OUT_OF_SCOPE_MEDIAN, |k| c.dwell_medians[k.index()]);
            places.push(PlaceSpec {
                id: format!("place-{:05}", places.len()),
                category,
                county: tracts[tract].county,
                dwell_median: median * median_noise,
            });
            last_size = 1;
            places.len() - 1
        };
        let lat = 27.0 + 0.1 * tracts[tract].county as f64 + rng.random::<f64>() * 0.08;
        let lon = -82.5 + 0.01 * (tract % c.tracts_per_county) as f64 + rng.random::<f64>() * 0.008;
        pois.push(PoiSpec {
            record: PoiRecord {
                poi_id: format!("poi-{p:05}"),
                naics: naics.parse().expect("static NAICS code"),
                latitude: (lat * 1e6).round() / 1e6,
                longitude: (lon * 1e6).round() / 1e6,
                colocation_key: places[place].id.clone(),
                tract_geoid: tracts[tract].geoid.clone(),
                open_date: None,
                close_date: None,
            },
            place,
        });
    }
    (pois, places)
}

/// Expected default-policy representative minutes per visit for a category,
/// averaged over the spread of place medians.
fn expected_representative(median: f64, shape: f64, policy: &DwellPolicy) -> f64 {
    const NODES: usize = 32;
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    // Exact minutes are rounded, so bucket edges sit at half minutes.
    let edges = [4.5, 10.5, 20.5, 60.5, 120.5, 240.5];
    let mut total = 0.0;
    for q in 0..NODES {
        let z = std_normal.inverse_cdf((q as f64 + 0.5) / NODES as f64);
        let m = median * (PLACE_MEDIAN_SPREAD * z).exp();
        let d = LogNormal::new(m.ln(), shape).expect("positive shape");
        let mut prev = 0.0;
        for (b, bucket) in DwellBucket::ALL.iter().enumerate() {
            let cdf = if b < edges.len() { d.cdf(edges[b]) } else { 1.0 };
            total += (cdf - prev) * policy.representative(*bucket);
            prev = cdf;
        }
    }
    total / NODES as f64
}

fn draw_minutes<R: Rng>(rng: &mut R, median: f64, shape: f64) -> u32 {
    let x = median * (shape * normal(rng)).exp();
    (x.round().max(1.0) as u32).min(MAX_DWELL_MINUTES)
}

fn months_of(weeks: &[NaiveDate]) -> Vec<YearMonth> {
    let mut months: Vec<YearMonth> = weeks.iter().map(|w| YearMonth::of(*w)).collect();
    months.dedup();
    months
}

fn device_counts(c: &SynthConfig, tracts: &[TractSpec], months: &[YearMonth]) -> Vec<Vec<u64>> {
    tracts
        .iter()
        .enumerate()
        .map(|(t, spec)| {
            months
                .iter()
                .enumerate()
                .map(|(m, _)| {
                    if t >= c.tracts - c.zero_device_tracts {
                        return 0;
                    }
                    let mut rng = rng_for(c.seed, &[TAG_PANEL, t as u64, m as u64]);
                    let noise = (PANEL_MONTHLY_SPREAD * normal(&mut rng)).exp();
                    let cap = (spec.population as f64 * crate::ingest::MAX_COVERAGE_RATE).floor();
                    (spec.population as f64 * spec.coverage * noise).round().min(cap) as u64
                })
                .collect()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn generate_week(
    c: &SynthConfig,
    w: usize,
    month: usize,
    tracts: &[TractSpec],
    places: &[PlaceSpec],
    devices: &[Vec<u64>],
    e_rep: &[f64; 7],
    by_category: &[Vec<usize>],
    by_category_county: &BTreeMap<(usize, usize), Vec<usize>>,
) -> Vec<Vec<Draw>> {
    let mut per_place: Vec<Vec<Draw>> = vec![Vec::new(); places.len()];
    let inflate = 1.0 / (1.0 - c.unattributed_rate);
    for (t, tract) in tracts.iter().enumerate() {
        let d = devices[t][month];
        if d == 0 {
            continue;
        }
        let mut week_rng = rng_for(c.seed, &[TAG_WEEK, w as u64, t as u64]);
        let jitter = (c.weekly_jitter * normal(&mut week_rng)).exp();
        for k in ActivityCategory::ALL {
            let candidates = &by_category[k.index()];
            let local = by_category_county.get(&(k.index(), tract.county));
            let mut rng = rng_for(c.seed, &[TAG_VISITS, w as u64, t as u64, k.index() as u64]);
            let expected =
                tract.intensity * tract.shares[k.index()] * jitter * d as f64 / e_rep[k.index()] * inflate;
            let n = expected.round() as usize;
            for _ in 0..n {
                let pool = match local {
                    Some(l) if rng.random::<f64>() < c.local_visit_share => l,
                    _ => candidates,
                };
                let place = pool[rng.random_range(0..pool.len())];
                let home = (rng.random::<f64>() >= c.unattributed_rate)
                    .then(|| (t, rng.random_range(0..tract.cbgs.len())));
                let minutes = draw_minutes(&mut rng, places[place].dwell_median, c.dwell_shape);
                per_place[place].push(Draw { home, minutes });
            }
        }
    }
    for (p, place) in places.iter().enumerate() {
        if place.category.is_some() {
            continue;
        }
        let mut rng = rng_for(c.seed, &[TAG_BACKGROUND, w as u64, p as u64]);
        let n = rng.random_range(5..=40);
        for _ in 0..n {
            let t = rng.random_range(0..tracts.len());
            let home = (rng.random::<f64>() >= c.unattributed_rate)
                .then(|| (t, rng.random_range(0..tracts[t].cbgs.len())));
            let minutes = draw_minutes(&mut rng, place.dwell_median, c.dwell_shape);
            per_place[p].push(Draw { home, minutes });
        }
    }
    per_place
}

/// Builds a complete instance from `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let c = config;
    let tracts = build_tracts(c);
    let (pois, places) = build_pois(c, &tracts);
    let weeks = c.week_starts();
    let months = months_of(&weeks);
    let devices = device_counts(c, &tracts, &months);
    let policy = DwellPolicy::default();
    let e_rep: [f64; 7] =
        std::array::from_fn(|k| expected_representative(c.dwell_medians[k], c.dwell_shape, &policy));

    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); 7];
    let mut by_category_county: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in places.iter().enumerate() {
        if let Some(k) = p.category {
            by_category[k.index()].push(i);
            by_category_county.entry((k.index(), p.county)).or_default().push(i);
        }
    }

    let draws: Vec<Vec<Vec<Draw>>> = weeks
        .par_iter()
        .enumerate()
        .map(|(w, week)| {
            let month = months
                .iter()
                .position(|m| *m == YearMonth::of(*week))
                .expect("month of a generated week");
            generate_week(c, w, month, &tracts, &places, &devices, &e_rep, &by_category, &by_category_county)
        })
        .collect();

    let mut patterns = Vec::with_capacity(pois.len() * weeks.len());
    let mut ledger = Vec::new();
    for (week, per_place) in weeks.iter().zip(&draws) {
        let place_patterns: Vec<(DwellHistogram, BTreeMap<String, f64>)> = per_place
            .iter()
            .map(|visits| {
                let mut hist = [0.0; 7];
                let mut homes: BTreeMap<String, f64> = BTreeMap::new();
                for v in visits {
                    hist[DwellBucket::from_minutes(v.minutes).index()] += 1.0;
                    if let Some((t, b)) = v.home {
                        *homes.entry(tracts[t].cbgs[b].clone()).or_default() += 1.0;
                    }
                }
                (DwellHistogram(hist), homes)
            })
            .collect();
        for poi in &pois {
            let (hist, homes) = &place_patterns[poi.place];
            patterns.push(WeeklyPattern {
                poi_id: poi.record.poi_id.clone(),
                week_start: *week,
                raw_visits: per_place[poi.place].len() as f64,
                dwell_buckets: hist.clone(),
                home_areas: homes.clone(),
            });
        }
        for (place, visits) in places.iter().zip(per_place) {
            for v in visits {
                ledger.push(LedgerVisit {
                    week_start: *week,
                    place_id: place.id.clone(),
                    home_cbg: v.home.map(|(t, b)| tracts[t].cbgs[b].clone()),
                    dwell_minutes: v.minutes,
                });
            }
        }
    }

    let mut panel = Vec::new();
    for (t, spec) in tracts.iter().enumerate() {
        for (m, month) in months.iter().enumerate() {
            panel.push(PanelObservation {
                geoid: spec.geoid.clone(),
                month: *month,
                device_count: devices[t][m],
                population: Some(spec.population),
            });
        }
    }

    let mut hierarchy = GeoHierarchy::default();
    let mut labels = BTreeMap::new();
    for (t, spec) in tracts.iter().enumerate() {
        let within = t % c.tracts_per_county;
        let sub = if c.tracts_per_county > 1 {
            within * 2 / c.tracts_per_county
        } else {
            0
        };
        let county = c.county_geoid(spec.county);
        let metro = c.metro_of(spec.county);
        labels.insert(
            spec.geoid.clone(),
            if metro.is_some() {
                AreaLabel::Urban
            } else {
                AreaLabel::Rural
            },
        );
        hierarchy.tracts.insert(
            spec.geoid.clone(),
            TractMembership {
                county_subdivision_geoid: format!("{county}{:05}", 90001 + sub),
                county_geoid: county,
                metro_geoid: metro,
            },
        );
    }

    let mut weights = Vec::new();
    for (t, spec) in tracts.iter().enumerate() {
        if t % 5 == 4 {
            weights.push(CrosswalkWeight {
                source_geoid: spec.geoid.clone(),
                target_geoid: spec.geoid.clone(),
                weight: 0.7,
            });
            weights.push(CrosswalkWeight {
                source_geoid: spec.geoid.clone(),
                target_geoid: tracts[t - 1].geoid.clone(),
                weight: 0.3,
            });
        } else {
            weights.push(CrosswalkWeight {
                source_geoid: spec.geoid.clone(),
                target_geoid: spec.geoid.clone(),
                weight: 1.0,
            });
        }
    }
    let crosswalk = Crosswalk::new(weights)?;

    let pairs = CATEGORY_NAICS.iter().enumerate().flat_map(|(k, codes)| {
        codes
            .iter()
            .map(move |code| (code.parse().expect("static NAICS code"), ActivityCategory::ALL[k]))
    });
    let category_map = CategoryMap::from_pairs(pairs)?;

    Ok(SynthDataset {
        config: config.clone(),
        pois: pois.into_iter().map(|p| p.record).collect(),
        patterns,
        panel,
        category_map,
        hierarchy,
        crosswalk,
        ledger,
        labels,
    })
}

pub fn write_ledger<W: Write>(output: W, ledger: &[LedgerVisit]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["week_start", "place_id", "home_cbg", "home_tract", "dwell_minutes"])
        .map_err(crate::ingest::write_err)?;
    for v in ledger {
        let tract = v.home_cbg.as_deref().map(|c| &c[..11]).unwrap_or("");
        w.write_record([
            v.week_start.format("%Y-%m-%d").to_string().as_str(),
            &v.place_id,
            v.home_cbg.as_deref().unwrap_or(""),
            tract,
            &v.dwell_minutes.to_string(),
        ])
        .map_err(crate::ingest::write_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a ledger written by [`write_ledger`]; `home_tract` is ignored.
pub fn read_ledger<R: Read>(input: R) -> Result<Vec<LedgerVisit>, IngestError> {
    let parsed = crate::ingest::parse_rows(input, crate::Strictness::Strict, |cols| {
        let week = cols.require("week_start")?;
        let place = cols.require("place_id")?;
        let home = cols.require("home_cbg")?;
        let minutes = cols.require("dwell_minutes")?;
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let home_cbg = match rec.get(home).unwrap_or("").trim() {
                "" => None,
                cbg => {
                    crate::ingest::cbg_to_tract(cbg)
                        .map_err(|source| IngestError::Geoid { row, source })?;
                    Some(cbg.to_string())
                }
            };
            let text = rec.get(minutes).unwrap_or("").trim();
            Ok(LedgerVisit {
                week_start: crate::ingest::parse_date(row, "week_start", rec.get(week).unwrap_or("").trim())?,
                place_id: rec.get(place).unwrap_or("").trim().to_string(),
                home_cbg,
                dwell_minutes: text.parse().map_err(|_| IngestError::InvalidField {
                    row,
                    column: "dwell_minutes".into(),
                    reason: format!("'{text}' is not a whole number of minutes"),
                })?,
            })
        })
    })?;
    Ok(parsed.records)
}

/// A pattern row replaced by a malformed one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedRow {
    /// 1-based data row in `patterns.csv`.
    pub row: usize,
    pub kind: &'static str,
}

const CORRUPTION_KINDS: [&str; 5] = [
    "non_monday_week",
    "truncated_bucket_json",
    "negative_visits",
    "missing_bucket",
    "bad_home_geoid",
];

fn corrupt_line(p: &WeeklyPattern, kind: &str) -> String {
    let mut fields = vec![
        p.poi_id.clone(),
        p.week_start.format("%Y-%m-%d").to_string(),
        crate::ingest::format_number(p.raw_visits),
        buckets_json(&p.dwell_buckets),
        home_areas_json(&p.home_areas),
    ];
    match kind {
        "non_monday_week" => fields[1] = (p.week_start + Duration::days(2)).format("%Y-%m-%d").to_string(),
        "truncated_bucket_json" => {
            let json = &fields[3];
            fields[3] = json[..json.len() / 2].to_string();
        }
        "negative_visits" => fields[2] = format!("-{}", p.raw_visits.max(1.0)),
        "missing_bucket" => fields[3] = r#"{"<5":1,"5-10":0}"#.to_string(),
        _ => fields[4] = r#"{"1234":1}"#.to_string(),
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&fields).expect("in-memory write");
    let bytes = w.into_inner().expect("in-memory flush");
    String::from_utf8(bytes).expect("utf-8 fields").trim_end().to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    File::create(path).map(BufWriter::new).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes every input table, the ledger, labels and the effective config to
/// `dir`. Returns the pattern rows replaced by malformed rows.
pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> Result<Vec<CorruptedRow>, SynthError> {
    use crate::pipeline::{CATEGORIES_FILE, HIERARCHY_FILE, PANEL_FILE, PATTERNS_FILE, POIS_FILE};
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_poi_catalog(create(&dir.join(POIS_FILE))?, &ds.pois)?;
    write_panel(create(&dir.join(PANEL_FILE))?, &ds.panel)?;
    write_category_map(create(&dir.join(CATEGORIES_FILE))?, &ds.category_map)?;
    write_hierarchy(create(&dir.join(HIERARCHY_FILE))?, &ds.hierarchy)?;
    write_crosswalk(create(&dir.join(CROSSWALK_FILE))?, &ds.crosswalk)?;
    write_ledger(create(&dir.join(LEDGER_FILE))?, &ds.ledger)?;

    let mut labels = csv::Writer::from_writer(create(&dir.join(LABELS_FILE))?);
    labels.write_record(["geoid", "label"]).map_err(crate::ingest::write_err)?;
    for (g, l) in &ds.labels {
        labels.write_record([g.as_str(), l.as_str()]).map_err(crate::ingest::write_err)?;
    }
    labels.flush().map_err(IngestError::from)?;

    let config_path = dir.join(CONFIG_FILE);
    create(&config_path)?
        .write_all(ds.config.to_toml().as_bytes())
        .map_err(|source| SynthError::Io {
            path: config_path.clone(),
            source,
        })?;

    let mut corrupted = Vec::new();
    let path = dir.join(PATTERNS_FILE);
    if ds.config.corrupt_rows == 0 {
        write_weekly_patterns(create(&path)?, &ds.patterns)?;
    } else {
        let mut buf = Vec::new();
        write_weekly_patterns(&mut buf, &ds.patterns)?;
        let text = String::from_utf8(buf).expect("utf-8 output");
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let mut rng = rng_for(ds.config.seed, &[TAG_CORRUPT]);
        let mut rows = rand::seq::index::sample(&mut rng, ds.patterns.len(), ds.config.corrupt_rows).into_vec();
        rows.sort_unstable();
        for (i, r) in rows.into_iter().enumerate() {
            let kind = CORRUPTION_KINDS[i % CORRUPTION_KINDS.len()];
            lines[r + 1] = corrupt_line(&ds.patterns[r], kind);
            corrupted.push(CorruptedRow { row: r + 1, kind });
        }
        let mut out = create(&path)?;
        for l in &lines {
            writeln!(out, "{l}").map_err(|source| SynthError::Io {
                path: path.clone(),
                source,
            })?;
        }
        let mut w = csv::Writer::from_writer(create(&dir.join(CORRUPTED_FILE))?);
        w.write_record(["row", "kind"]).map_err(crate::ingest::write_err)?;
        for c in &corrupted {
            w.write_record([c.row.to_string().as_str(), c.kind]).map_err(crate::ingest::write_err)?;
        }
        w.flush().map_err(IngestError::from)?;
    }
    Ok(corrupted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            tracts: 12,
            tracts_per_county: 4,
            pois: 60,
            weeks: 2,
            population_min: 300,
            population_max: 600,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = SynthConfig::default();
        assert_eq!(SynthConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = SynthConfig::from_toml("seed = 7\ntracts = 20\n").unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.pois, 500);
        assert!(SynthConfig::from_toml("sede = 7\n").is_err());
        assert!(SynthConfig::from_toml("start_week = \"2023-01-17\"\n").is_err());
    }

    #[test]
    fn patterns_bin_the_ledger_exactly() {
        let ds = generate(&small()).unwrap();
        let poi_place: BTreeMap<&str, &str> = ds
            .pois
            .iter()
            .map(|p| (p.poi_id.as_str(), p.colocation_key.as_str()))
            .collect();
        let mut by_place: BTreeMap<(NaiveDate, &str), ([f64; 7], f64, BTreeMap<String, f64>)> =
            BTreeMap::new();
        for v in &ds.ledger {
            let e = by_place.entry((v.week_start, v.place_id.as_str())).or_default();
            e.0[DwellBucket::from_minutes(v.dwell_minutes).index()] += 1.0;
            e.1 += 1.0;
            if let Some(cbg) = &v.home_cbg {
                *e.2.entry(cbg.clone()).or_default() += 1.0;
            }
        }
        for p in &ds.patterns {
            let place = poi_place[p.poi_id.as_str()];
            match by_place.get(&(p.week_start, place)) {
                Some((hist, raw, homes)) => {
                    assert_eq!(&p.dwell_buckets.0, hist);
                    assert_eq!(p.raw_visits, *raw);
                    assert_eq!(&p.home_areas, homes);
                }
                None => assert_eq!(p.raw_visits, 0.0),
            }
        }
        assert_eq!(ds.patterns.len(), 60 * 2);
    }

    #[test]
    fn colocation_rate_zero_gives_unique_keys() {
        let ds = generate(&SynthConfig {
            colocation_rate: 0.0,
            ..small()
        })
        .unwrap();
        let keys: std::collections::BTreeSet<&str> =
            ds.pois.iter().map(|p| p.colocation_key.as_str()).collect();
        assert_eq!(keys.len(), ds.pois.len());
        let ds = generate(&SynthConfig {
            colocation_rate: 0.5,
            ..small()
        })
        .unwrap();
        let keys: std::collections::BTreeSet<&str> =
            ds.pois.iter().map(|p| p.colocation_key.as_str()).collect();
        assert!(keys.len() < ds.pois.len());
    }

    #[test]
    fn every_category_present_and_hierarchy_nested() {
        let ds = generate(&small()).unwrap();
        assert!(ds.category_map.missing_categories().is_empty());
        for k in ActivityCategory::ALL {
            assert!(ds.pois.iter().any(|p| ds.category_map.category(&p.naics) == Some(k)));
        }
        for (t, m) in &ds.hierarchy.tracts {
            assert_eq!(&t[..5], m.county_geoid);
            assert_eq!(&m.county_subdivision_geoid[..5], m.county_geoid);
        }
        assert!(ds.labels.values().any(|l| *l == AreaLabel::Rural));
        assert!(ds.labels.values().any(|l| *l == AreaLabel::Urban));
    }

    #[test]
    fn seed_changes_output() {
        let a = generate(&small()).unwrap();
        let b = generate(&SynthConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(a.ledger, b.ledger);
        assert_eq!(a.ledger, generate(&small()).unwrap().ledger);
    }

    #[test]
    fn expected_representative_is_a_mean_of_representatives() {
        let policy = DwellPolicy::default();
        let short = expected_representative(2.0, 0.1, &policy);
        assert!((short - 2.0).abs() < 0.05, "{short}");
        let long = expected_representative(2000.0, 0.1, &policy);
        assert!((long - 240.0).abs() < 1e-6, "{long}");
    }

    #[test]
    fn corruption_replaces_requested_rows() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&SynthConfig {
            corrupt_rows: 10,
            ..small()
        })
        .unwrap();
        let rows = write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(rows.len(), 10);
        let text = fs::read_to_string(dir.path().join("patterns.csv")).unwrap();
        let parsed =
            crate::ingest::parse_weekly_patterns(text.as_bytes(), crate::Strictness::Lenient).unwrap();
        let skipped: Vec<usize> = parsed.skipped.iter().filter_map(|e| e.row()).collect();
        assert_eq!(skipped, rows.iter().map(|r| r.row).collect::<Vec<_>>());
    }
}
