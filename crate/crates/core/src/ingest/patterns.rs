//! Weekly pattern table.
//!
//! Columns: `poi_id,week_start,raw_visits,dwell_buckets,home_areas`.
//! `dwell_buckets` holds a JSON object with exactly the seven bucket labels
//! (`{"<5":4,"5-10":2,...}`); `home_areas` holds a JSON object keyed by
//! 12-digit block-group GEOIDs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};
use serde_json::{Map, Number, Value};

use super::geoid::check_geoid;
use super::{field, parse_count, parse_date, parse_rows, IngestError, Parsed, Strictness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DwellBucket {
    Under5,
    From5To10,
    From11To20,
    From21To60,
    From61To120,
    From121To240,
    Over240,
}

impl DwellBucket {
    pub const ALL: [DwellBucket; 7] = [
        DwellBucket::Under5,
        DwellBucket::From5To10,
        DwellBucket::From11To20,
        DwellBucket::From21To60,
        DwellBucket::From61To120,
        DwellBucket::From121To240,
        DwellBucket::Over240,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DwellBucket::Under5 => "<5",
            DwellBucket::From5To10 => "5-10",
            DwellBucket::From11To20 => "11-20",
            DwellBucket::From21To60 => "21-60",
            DwellBucket::From61To120 => "61-120",
            DwellBucket::From121To240 => "121-240",
            DwellBucket::Over240 => ">240",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == label)
    }

    /// Inclusive minute range; the open bucket has no upper bound.
    pub fn minute_range(self) -> (u32, Option<u32>) {
        match self {
            DwellBucket::Under5 => (0, Some(4)),
            DwellBucket::From5To10 => (5, Some(10)),
            DwellBucket::From11To20 => (11, Some(20)),
            DwellBucket::From21To60 => (21, Some(60)),
            DwellBucket::From61To120 => (61, Some(120)),
            DwellBucket::From121To240 => (121, Some(240)),
            DwellBucket::Over240 => (241, None),
        }
    }

    pub fn from_minutes(minutes: u32) -> Self {
        match minutes {
            0..=4 => DwellBucket::Under5,
            5..=10 => DwellBucket::From5To10,
            11..=20 => DwellBucket::From11To20,
            21..=60 => DwellBucket::From21To60,
            61..=120 => DwellBucket::From61To120,
            121..=240 => DwellBucket::From121To240,
            _ => DwellBucket::Over240,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Visit counts per dwell bucket, in bucket order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DwellHistogram(pub [f64; 7]);

impl DwellHistogram {
    pub fn count(&self, bucket: DwellBucket) -> f64 {
        self.0[bucket.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyPattern {
    pub poi_id: String,
    pub week_start: NaiveDate,
    pub raw_visits: f64,
    pub dwell_buckets: DwellHistogram,
    /// Visits per visitor-home block group.
    pub home_areas: BTreeMap<String, f64>,
}

impl WeeklyPattern {
    /// Multiplies every count field by `factor`.
    pub fn scaled(&self, factor: f64) -> WeeklyPattern {
        WeeklyPattern {
            poi_id: self.poi_id.clone(),
            week_start: self.week_start,
            raw_visits: self.raw_visits * factor,
            dwell_buckets: DwellHistogram(self.dwell_buckets.0.map(|c| c * factor)),
            home_areas: self
                .home_areas
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        }
    }

    /// True when the count fields (everything but `poi_id`) coincide.
    pub fn same_counts(&self, other: &WeeklyPattern) -> bool {
        self.week_start == other.week_start
            && self.raw_visits == other.raw_visits
            && self.dwell_buckets == other.dwell_buckets
            && self.home_areas == other.home_areas
    }
}

fn parse_object(text: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err("not a JSON object".to_string()),
        Err(e) => Err(e.to_string()),
    }
}

fn object_count(row: usize, column: &str, key: &str, v: &Value) -> Result<f64, IngestError> {
    let n = v.as_f64().ok_or_else(|| IngestError::InvalidField {
        row,
        column: column.to_string(),
        reason: format!("value for '{key}' is not a number"),
    })?;
    if n < 0.0 {
        return Err(IngestError::NegativeCount {
            row,
            field: format!("{column}[{key}]"),
        });
    }
    Ok(n)
}

fn parse_buckets(row: usize, text: &str) -> Result<DwellHistogram, IngestError> {
    let malformed = |reason: String| IngestError::MalformedBucketObject { row, reason };
    let obj = parse_object(text).map_err(malformed)?;
    let mut counts = [None; 7];
    for (key, v) in &obj {
        let bucket = DwellBucket::from_label(key)
            .ok_or_else(|| malformed(format!("unknown bucket label '{key}'")))?;
        if !v.is_number() {
            return Err(malformed(format!("value for '{key}' is not a number")));
        }
        counts[bucket.index()] = Some(object_count(row, "dwell_buckets", key, v)?);
    }
    let mut out = [0.0; 7];
    for b in DwellBucket::ALL {
        out[b.index()] = counts[b.index()]
            .ok_or_else(|| malformed(format!("missing bucket '{}'", b.label())))?;
    }
    Ok(DwellHistogram(out))
}

fn parse_home_areas(row: usize, text: &str) -> Result<BTreeMap<String, f64>, IngestError> {
    let malformed = |reason: String| IngestError::MalformedHomeAreas { row, reason };
    if text.is_empty() {
        return Ok(BTreeMap::new());
    }
    let obj = parse_object(text).map_err(malformed)?;
    let mut out = BTreeMap::new();
    for (key, v) in &obj {
        check_geoid(key, 12).map_err(|source| IngestError::Geoid { row, source })?;
        if !v.is_number() {
            return Err(malformed(format!("value for '{key}' is not a number")));
        }
        out.insert(key.clone(), object_count(row, "home_areas", key, v)?);
    }
    Ok(out)
}

/// Parses a weekly-pattern CSV stream into validated records, in input order.
pub fn parse_weekly_patterns<R: Read>(
    input: R,
    strictness: Strictness,
) -> Result<Parsed<WeeklyPattern>, IngestError> {
    parse_rows(input, strictness, |cols| {
        let poi = cols.require("poi_id")?;
        let week = cols.require("week_start")?;
        let raw = cols.require("raw_visits")?;
        let buckets = cols.require("dwell_buckets")?;
        let homes = cols.require("home_areas")?;
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let poi_id = field(rec, poi);
            if poi_id.is_empty() {
                return Err(IngestError::InvalidField {
                    row,
                    column: "poi_id".into(),
                    reason: "empty".into(),
                });
            }
            let week_start = parse_date(row, "week_start", field(rec, week))?;
            if week_start.weekday() != Weekday::Mon {
                return Err(IngestError::NonMondayWeekStart {
                    row,
                    date: week_start,
                });
            }
            let raw_visits = parse_count(row, "raw_visits", field(rec, raw))?;
            let dwell_buckets = parse_buckets(row, field(rec, buckets))?;
            let home_areas = parse_home_areas(row, field(rec, homes))?;
            if let Some((cbg, &count)) = home_areas.iter().find(|(_, &c)| c > raw_visits) {
                return Err(IngestError::HomeAreaExceedsVisits {
                    row,
                    cbg: cbg.clone(),
                    count,
                    raw_visits,
                });
            }
            Ok(WeeklyPattern {
                poi_id: poi_id.to_string(),
                week_start,
                raw_visits,
                dwell_buckets,
                home_areas,
            })
        })
    })
}

pub(crate) fn json_number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::Number(Number::from(v as i64))
    } else {
        Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
    }
}

pub(crate) fn buckets_json(h: &DwellHistogram) -> String {
    let mut m = Map::new();
    for b in DwellBucket::ALL {
        m.insert(b.label().to_string(), json_number(h.count(b)));
    }
    Value::Object(m).to_string()
}

pub(crate) fn home_areas_json(homes: &BTreeMap<String, f64>) -> String {
    let m: Map<String, Value> = homes
        .iter()
        .map(|(k, &v)| (k.clone(), json_number(v)))
        .collect();
    Value::Object(m).to_string()
}

pub fn write_weekly_patterns<W: Write>(
    output: W,
    patterns: &[WeeklyPattern],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["poi_id", "week_start", "raw_visits", "dwell_buckets", "home_areas"])
        .map_err(super::write_err)?;
    for p in patterns {
        w.write_record([
            p.poi_id.clone(),
            p.week_start.format("%Y-%m-%d").to_string(),
            super::format_number(p.raw_visits),
            buckets_json(&p.dwell_buckets),
            home_areas_json(&p.home_areas),
        ])
        .map_err(super::write_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "poi_id,week_start,raw_visits,dwell_buckets,home_areas\n";
    const BUCKETS: &str =
        r#""{""<5"":4,""5-10"":2,""11-20"":0,""21-60"":0,""61-120"":0,""121-240"":0,"">240"":0}""#;

    fn row(poi: &str, week: &str, raw: &str, buckets: &str, homes: &str) -> String {
        format!("{poi},{week},{raw},{buckets},{homes}\n")
    }

    #[test]
    fn single_row_parses() {
        let csv = format!(
            "{HEADER}{}",
            row("p1", "2023-01-02", "6", BUCKETS, r#""{""120310103011"":3}""#)
        );
        let parsed = parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.skip_count(), 0);
        let p = &parsed.records[0];
        assert_eq!(p.raw_visits, 6.0);
        assert_eq!(p.dwell_buckets.count(DwellBucket::Under5), 4.0);
        assert_eq!(p.dwell_buckets.count(DwellBucket::From5To10), 2.0);
        assert_eq!(p.home_areas["120310103011"], 3.0);
    }

    #[test]
    fn tuesday_week_start_is_rejected_or_skipped() {
        let csv = format!("{HEADER}{}", row("p1", "2023-01-03", "6", BUCKETS, "{}"));
        let err = parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, IngestError::NonMondayWeekStart { row: 1, .. }));
        let parsed = parse_weekly_patterns(csv.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(parsed.records.len(), 0);
        assert_eq!(parsed.skip_count(), 1);
    }

    #[test]
    fn missing_column_reported() {
        let csv = "poi_id,week_start,raw_visits,dwell_buckets\np1,2023-01-02,1,{}\n";
        let err = parse_weekly_patterns(csv.as_bytes(), Strictness::Lenient).unwrap_err();
        assert_eq!(
            err,
            IngestError::MissingColumn {
                column: "home_areas".into()
            }
        );
    }

    #[test]
    fn malformed_and_incomplete_bucket_objects() {
        let truncated = r#""{""<5"":4,""5-10""""#;
        let missing = r#""{""<5"":4}""#;
        let csv = format!(
            "{HEADER}{}{}",
            row("p1", "2023-01-02", "6", truncated, "{}"),
            row("p2", "2023-01-02", "6", missing, "{}"),
        );
        let err = parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, IngestError::MalformedBucketObject { row: 1, .. }));
        let parsed = parse_weekly_patterns(csv.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(parsed.skip_count(), 2);
        assert!(matches!(
            parsed.skipped[1],
            IngestError::MalformedBucketObject { row: 2, .. }
        ));
    }

    #[test]
    fn negative_counts_rejected() {
        let csv = format!("{HEADER}{}", row("p1", "2023-01-02", "-1", BUCKETS, "{}"));
        let err = parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, IngestError::NegativeCount { row: 1, .. }));
        let neg_bucket = r#""{""<5"":-4,""5-10"":2,""11-20"":0,""21-60"":0,""61-120"":0,""121-240"":0,"">240"":0}""#;
        let csv = format!("{HEADER}{}", row("p1", "2023-01-02", "1", neg_bucket, "{}"));
        let err = parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, IngestError::NegativeCount { row: 1, .. }));
    }

    #[test]
    fn home_area_above_raw_visits_rejected_but_sum_may_exceed() {
        let over = r#""{""120310103011"":7}""#;
        let csv = format!("{HEADER}{}", row("p1", "2023-01-02", "6", BUCKETS, over));
        assert!(matches!(
            parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap_err(),
            IngestError::HomeAreaExceedsVisits { .. }
        ));
        // Individual values within raw_visits but summing above it are accepted.
        let split = r#""{""120310103011"":5,""120310103012"":5}""#;
        let csv = format!("{HEADER}{}", row("p1", "2023-01-02", "6", BUCKETS, split));
        assert_eq!(
            parse_weekly_patterns(csv.as_bytes(), Strictness::Strict)
                .unwrap()
                .records
                .len(),
            1
        );
    }

    #[test]
    fn bad_home_geoid_rejected() {
        let bad = r#""{""12031010301"":1}""#;
        let csv = format!("{HEADER}{}", row("p1", "2023-01-02", "6", BUCKETS, bad));
        assert!(matches!(
            parse_weekly_patterns(csv.as_bytes(), Strictness::Strict).unwrap_err(),
            IngestError::Geoid { row: 1, .. }
        ));
    }

    #[test]
    fn bucket_binning_edges() {
        assert_eq!(DwellBucket::from_minutes(4), DwellBucket::Under5);
        assert_eq!(DwellBucket::from_minutes(5), DwellBucket::From5To10);
        assert_eq!(DwellBucket::from_minutes(240), DwellBucket::From121To240);
        assert_eq!(DwellBucket::from_minutes(241), DwellBucket::Over240);
    }

    fn arb_pattern() -> impl Strategy<Value = WeeklyPattern> {
        let counts = proptest::collection::vec(0u32..500, 7);
        let homes = proptest::collection::btree_map("[0-9]{12}", 0u32..50, 0..5);
        ("[a-z0-9:_-]{1,12}", 0i64..400, counts, homes, prop::bool::ANY).prop_map(
            |(poi, week, counts, homes, halves)| {
                let week_start = NaiveDate::from_ymd_opt(2019, 1, 7).unwrap()
                    + chrono::Duration::weeks(week);
                let k = if halves { 0.5 } else { 1.0 };
                let mut buckets = [0.0; 7];
                for (b, c) in buckets.iter_mut().zip(&counts) {
                    *b = *c as f64 * k;
                }
                let raw = buckets.iter().sum::<f64>() + 50.0;
                WeeklyPattern {
                    poi_id: poi,
                    week_start,
                    raw_visits: raw,
                    dwell_buckets: DwellHistogram(buckets),
                    home_areas: homes.into_iter().map(|(g, c)| (g, c as f64 / 3.0)).collect(),
                }
            },
        )
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(patterns in proptest::collection::vec(arb_pattern(), 0..8)) {
            let mut buf = Vec::new();
            write_weekly_patterns(&mut buf, &patterns).unwrap();
            let parsed = parse_weekly_patterns(buf.as_slice(), Strictness::Strict).unwrap();
            prop_assert_eq!(parsed.records, patterns);
        }
    }
}
