//! Device-panel table.
//!
//! Columns: `geoid,month,device_count,population` where `month` is `yyyy-mm`
//! and `population` may be empty. GEOIDs may be tract (11), county (5) or
//! state (2) level.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use super::{field, parse_rows, IngestError, Parsed, Strictness};

/// Coverage rates above this are rejected as implausible.
pub const MAX_COVERAGE_RATE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(YearMonth { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("'{s}' is not a yyyy-mm month");
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).ok_or_else(bad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageFlag {
    Ok,
    /// More devices than residents.
    AboveOne,
    /// Zero population with a positive device count.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelObservation {
    pub geoid: String,
    pub month: YearMonth,
    pub device_count: u64,
    pub population: Option<u64>,
}

impl PanelObservation {
    /// Devices per resident; `None` when population is absent or zero.
    pub fn coverage_rate(&self) -> Option<f64> {
        match self.population {
            Some(p) if p > 0 => Some(self.device_count as f64 / p as f64),
            _ => None,
        }
    }

    pub fn coverage_flag(&self) -> CoverageFlag {
        match (self.population, self.coverage_rate()) {
            (Some(0), _) if self.device_count > 0 => CoverageFlag::Undefined,
            (_, Some(r)) if r > 1.0 => CoverageFlag::AboveOne,
            _ => CoverageFlag::Ok,
        }
    }
}

fn parse_u64(row: usize, column: &str, text: &str) -> Result<u64, IngestError> {
    if let Some(stripped) = text.strip_prefix('-') {
        if stripped.parse::<f64>().is_ok() {
            return Err(IngestError::NegativeCount {
                row,
                field: column.to_string(),
            });
        }
    }
    text.parse().map_err(|_| IngestError::InvalidField {
        row,
        column: column.to_string(),
        reason: format!("'{text}' is not a nonnegative integer"),
    })
}

pub fn parse_panel<R: Read>(
    input: R,
    strictness: Strictness,
) -> Result<Parsed<PanelObservation>, IngestError> {
    parse_rows(input, strictness, |cols| {
        let geoid = cols.require("geoid")?;
        let month = cols.require("month")?;
        let devices = cols.require("device_count")?;
        let population = cols.optional("population");
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let g = field(rec, geoid);
            if !matches!(g.len(), 2 | 5 | 11) || !super::is_digits(g) {
                return Err(IngestError::InvalidField {
                    row,
                    column: "geoid".into(),
                    reason: format!("'{g}' is not a state, county or tract GEOID"),
                });
            }
            let month = field(rec, month)
                .parse()
                .map_err(|reason| IngestError::InvalidField {
                    row,
                    column: "month".into(),
                    reason,
                })?;
            let device_count = parse_u64(row, "device_count", field(rec, devices))?;
            let population = match population.map(|i| field(rec, i)) {
                None | Some("") => None,
                Some(t) => Some(parse_u64(row, "population", t)?),
            };
            let obs = PanelObservation {
                geoid: g.to_string(),
                month,
                device_count,
                population,
            };
            if let Some(rate) = obs.coverage_rate() {
                if rate > MAX_COVERAGE_RATE {
                    return Err(IngestError::CoverageOutOfRange {
                        row,
                        rate,
                        max: MAX_COVERAGE_RATE,
                    });
                }
            }
            Ok(obs)
        })
    })
}

pub fn write_panel<W: Write>(output: W, panel: &[PanelObservation]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["geoid", "month", "device_count", "population"])
        .map_err(super::write_err)?;
    for p in panel {
        w.write_record([
            p.geoid.clone(),
            p.month.to_string(),
            p.device_count.to_string(),
            p.population.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(super::write_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Panel observations keyed by (geoid, month).
#[derive(Debug, Clone, Default)]
pub struct PanelIndex {
    by_key: HashMap<(String, YearMonth), PanelObservation>,
}

impl PanelIndex {
    /// Later duplicates of a (geoid, month) key replace earlier ones.
    pub fn new(observations: impl IntoIterator<Item = PanelObservation>) -> Self {
        let by_key = observations
            .into_iter()
            .map(|o| ((o.geoid.clone(), o.month), o))
            .collect();
        PanelIndex { by_key }
    }

    pub fn get(&self, geoid: &str, month: YearMonth) -> Option<&PanelObservation> {
        self.by_key.get(&(geoid.to_string(), month))
    }

    /// Observation for the month containing `week_start`.
    pub fn for_week(&self, geoid: &str, week_start: NaiveDate) -> Option<&PanelObservation> {
        self.get(geoid, YearMonth::of(week_start))
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PanelObservation> {
        self.by_key.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(body: &str) -> Parsed<PanelObservation> {
        let csv = format!("geoid,month,device_count,population\n{body}");
        parse_panel(csv.as_bytes(), Strictness::Lenient).unwrap()
    }

    #[test]
    fn coverage_is_devices_over_population() {
        let p = parse("12031010301,2023-01,150,4000\n");
        let obs = &p.records[0];
        assert_eq!(obs.month, YearMonth::new(2023, 1).unwrap());
        assert_eq!(obs.coverage_rate(), Some(0.0375));
        assert_eq!(obs.coverage_flag(), CoverageFlag::Ok);
    }

    #[test]
    fn zero_devices_is_valid() {
        let p = parse("12031010301,2023-01,0,4000\n");
        assert_eq!(p.records[0].device_count, 0);
        assert_eq!(p.records[0].coverage_rate(), Some(0.0));
    }

    #[test]
    fn zero_population_is_flagged_not_rejected() {
        let p = parse("12031010301,2023-01,5,0\n");
        assert_eq!(p.skip_count(), 0);
        assert_eq!(p.records[0].coverage_rate(), None);
        assert_eq!(p.records[0].coverage_flag(), CoverageFlag::Undefined);
    }

    #[test]
    fn coverage_above_one_flagged_above_limit_rejected() {
        let p = parse("12031010301,2023-01,120,100\n12031010302,2023-01,200,100\n");
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].coverage_flag(), CoverageFlag::AboveOne);
        assert!(matches!(
            p.skipped[0],
            IngestError::CoverageOutOfRange { row: 2, .. }
        ));
    }

    #[test]
    fn optional_population_and_bad_month() {
        let p = parse("12,2023-02,10,\n12,2023-13,10,\n12,2023-2,1,\n");
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].population, None);
        assert_eq!(p.skip_count(), 2);
    }

    #[test]
    fn negative_devices_rejected() {
        let csv = "geoid,month,device_count,population\n12,2023-02,-3,\n";
        assert!(matches!(
            parse_panel(csv.as_bytes(), Strictness::Strict).unwrap_err(),
            IngestError::NegativeCount { row: 1, .. }
        ));
    }

    #[test]
    fn week_joins_month_of_its_monday() {
        let idx = PanelIndex::new(parse("12031010301,2023-01,7,\n").records);
        let monday = NaiveDate::from_ymd_opt(2023, 1, 30).unwrap();
        assert_eq!(idx.for_week("12031010301", monday).unwrap().device_count, 7);
        let feb = NaiveDate::from_ymd_opt(2023, 2, 6).unwrap();
        assert!(idx.for_week("12031010301", feb).is_none());
    }
}
