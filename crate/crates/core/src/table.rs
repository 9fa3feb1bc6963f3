//! The weekly output table: one row per (GEOID, week) with per-user and
//! per-visit STU for `all` and each activity category, diversity and Gini.
//!
//! Column order is fixed:
//!
//! ```text
//! GEOID, Timestamp,
//! Per_User_STU_all, Per_User_STU_Grocery, ..., Per_User_STU_Religious,
//! Per_Visit_STU_all, Per_Visit_STU_Grocery, ..., Per_Visit_STU_Religious,
//! Diversity, Gini
//! ```
//!
//! Absent values are empty fields. Every level uses the same header; the
//! Gini column is always empty for tracts.

use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};

use crate::category::{ActivityCategory, CategoryValues};
use crate::ingest::IngestError;

#[derive(Debug, Clone, PartialEq)]
pub struct StuRecord {
    pub geoid: String,
    pub week_start: NaiveDate,
    pub per_user: CategoryValues<Option<f64>>,
    pub per_visit: CategoryValues<Option<f64>>,
    pub diversity: Option<f64>,
    pub gini: Option<f64>,
}

impl StuRecord {
    pub fn empty(geoid: impl Into<String>, week_start: NaiveDate) -> Self {
        StuRecord {
            geoid: geoid.into(),
            week_start,
            per_user: CategoryValues::splat(None),
            per_visit: CategoryValues::splat(None),
            diversity: None,
            gini: None,
        }
    }

    /// Values in column order after GEOID and Timestamp.
    pub fn values(&self) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(18);
        out.push(self.per_user.all);
        out.extend(self.per_user.by_category);
        out.push(self.per_visit.all);
        out.extend(self.per_visit.by_category);
        out.push(self.diversity);
        out.push(self.gini);
        out
    }
}

pub fn header() -> Vec<String> {
    let mut h = vec!["GEOID".to_string(), "Timestamp".to_string()];
    for prefix in ["Per_User_STU", "Per_Visit_STU"] {
        h.push(format!("{prefix}_all"));
        for c in ActivityCategory::ALL {
            h.push(format!("{prefix}_{}", c.name()));
        }
    }
    h.push("Diversity".into());
    h.push("Gini".into());
    h
}

/// How floats are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloatFormat {
    /// Shortest text that parses back to the same `f64`.
    #[default]
    RoundTrip,
    /// Rounded to this many significant digits.
    Significant(u32),
}

impl FloatFormat {
    pub fn render(self, v: f64) -> String {
        match self {
            FloatFormat::RoundTrip => format!("{v}"),
            FloatFormat::Significant(d) => format!("{}", round_significant(v, d)),
        }
    }
}

fn round_significant(v: f64, digits: u32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let text = format!("{:.*e}", digits.saturating_sub(1) as usize, v);
    text.parse().unwrap_or(v)
}

pub fn write_table<W: Write>(
    output: W,
    records: &[StuRecord],
    format: FloatFormat,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(header()).map_err(crate::ingest::write_err)?;
    for r in records {
        let mut row = vec![r.geoid.clone(), r.week_start.format("%Y-%m-%d").to_string()];
        row.extend(
            r.values()
                .into_iter()
                .map(|v| v.map(|x| format.render(x)).unwrap_or_default()),
        );
        w.write_record(&row).map_err(crate::ingest::write_err)?;
    }
    w.flush()?;
    Ok(())
}

fn field_error(row: usize, column: &str, reason: impl Into<String>) -> IngestError {
    IngestError::InvalidField {
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
}

/// Reads a table written by [`write_table`]. The header must match exactly.
pub fn read_table<R: Read>(input: R) -> Result<Vec<StuRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let expected = header();
    let headers = rdr.headers().map_err(crate::ingest::write_err)?.clone();
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(name.as_str()) {
            return Err(IngestError::MissingColumn {
                column: name.clone(),
            });
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| crate::ingest::csv_error(Some(row), e))?;
        if rec.len() != expected.len() {
            return Err(field_error(row, "GEOID", format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let week_start = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
            .map_err(|e| field_error(row, "Timestamp", e.to_string()))?;
        if week_start.weekday() != Weekday::Mon {
            return Err(field_error(row, "Timestamp", format!("{week_start} is not a Monday")));
        }
        let mut values = Vec::with_capacity(18);
        for (j, text) in rec.iter().enumerate().skip(2) {
            let text = text.trim();
            values.push(if text.is_empty() {
                None
            } else {
                Some(text.parse::<f64>().map_err(|_| {
                    field_error(row, &expected[j], format!("'{text}' is not a number"))
                })?)
            });
        }
        let block = |offset: usize| CategoryValues {
            all: values[offset],
            by_category: std::array::from_fn(|k| values[offset + 1 + k]),
        };
        out.push(StuRecord {
            geoid: rec[0].to_string(),
            week_start,
            per_user: block(0),
            per_visit: block(8),
            diversity: values[16],
            gini: values[17],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> StuRecord {
        let mut r = StuRecord::empty("12057010100", NaiveDate::from_ymd_opt(2023, 1, 2).unwrap());
        r.per_user = CategoryValues {
            all: Some(0.1 + 0.2),
            by_category: [Some(1.0 / 3.0), Some(0.0), None, Some(2.5e-7), Some(123456.789), None, Some(1e300)],
        };
        r.per_visit.all = Some(std::f64::consts::PI);
        r.diversity = Some(1.0397207708399179);
        r
    }

    #[test]
    fn header_is_pinned() {
        assert_eq!(
            header().join(","),
            "GEOID,Timestamp,Per_User_STU_all,Per_User_STU_Grocery,Per_User_STU_Consume,\
Per_User_STU_Sports,Per_User_STU_Events,Per_User_STU_Dining,Per_User_STU_Arts,\
Per_User_STU_Religious,Per_Visit_STU_all,Per_Visit_STU_Grocery,Per_Visit_STU_Consume,\
Per_Visit_STU_Sports,Per_Visit_STU_Events,Per_Visit_STU_Dining,Per_Visit_STU_Arts,\
Per_Visit_STU_Religious,Diversity,Gini"
        );
    }

    #[test]
    fn round_trip_is_exact() {
        let recs = vec![record(), StuRecord::empty("12057", NaiveDate::from_ymd_opt(2023, 1, 9).unwrap())];
        let mut buf = Vec::new();
        write_table(&mut buf, &recs, FloatFormat::RoundTrip).unwrap();
        assert_eq!(read_table(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(FloatFormat::Significant(6).render(1.0 / 3.0), "0.333333");
        assert_eq!(FloatFormat::Significant(6).render(123456.789), "123457");
        assert_eq!(FloatFormat::Significant(3).render(0.0), "0");
    }

    #[test]
    fn rejects_non_monday_and_bad_header() {
        let mut buf = Vec::new();
        write_table(&mut buf, &[StuRecord::empty("1", NaiveDate::from_ymd_opt(2023, 1, 3).unwrap())], FloatFormat::RoundTrip).unwrap();
        assert!(read_table(buf.as_slice()).is_err());
        assert!(read_table("GEOID,Time\n".as_bytes()).is_err());
    }
}
