//! Parsers and writers for the pipeline's input tables.
//!
//! All tables are UTF-8, comma-delimited CSV with a header row (RFC 4180
//! quoting). Columns are located by name, so column order is free and extra
//! columns are ignored. Row numbers in errors are 1-based and count data rows
//! only (the header is not row 1).

mod catalog;
mod categories;
mod geoid;
mod hierarchy;
mod panel;
mod patterns;
mod values;

use std::collections::HashMap;

use chrono::NaiveDate;
use thiserror::Error;

pub use catalog::{load_poi_catalog, write_poi_catalog, PoiCatalog, PoiRecord};
pub use categories::{load_category_map, write_category_map, CategoryMap};
pub use geoid::{cbg_to_tract, is_digits, GeoidError, Naics};
pub use hierarchy::{
    load_crosswalk, load_hierarchy, write_crosswalk, write_hierarchy, Crosswalk, CrosswalkWeight,
    GeoHierarchy, TractMembership,
};
pub use panel::{
    parse_panel, write_panel, CoverageFlag, PanelIndex, PanelObservation, YearMonth,
    MAX_COVERAGE_RATE,
};
pub use patterns::{
    parse_weekly_patterns, write_weekly_patterns, DwellBucket, DwellHistogram, WeeklyPattern,
};
pub use values::{read_edges, read_pairs, read_values, LabeledValue};
pub(crate) use patterns::{buckets_json, home_areas_json};

/// How parsers react to a malformed row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Abort on the first malformed row.
    Strict,
    /// Skip malformed rows and report them.
    #[default]
    Lenient,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("csv error at row {row:?}: {message}")]
    Csv { row: Option<usize>, message: String },
    #[error("missing required column '{column}'")]
    MissingColumn { column: String },
    #[error("row {row}: malformed dwell bucket object: {reason}")]
    MalformedBucketObject { row: usize, reason: String },
    #[error("row {row}: malformed home areas object: {reason}")]
    MalformedHomeAreas { row: usize, reason: String },
    #[error("row {row}: week_start {date} is not a Monday")]
    NonMondayWeekStart { row: usize, date: NaiveDate },
    #[error("row {row}: negative count in '{field}'")]
    NegativeCount { row: usize, field: String },
    #[error("row {row}: home area {cbg} count {count} exceeds raw visits {raw_visits}")]
    HomeAreaExceedsVisits {
        row: usize,
        cbg: String,
        count: f64,
        raw_visits: f64,
    },
    #[error("row {row}: invalid value for '{column}': {reason}")]
    InvalidField {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("row {row}: {source}")]
    Geoid { row: usize, source: GeoidError },
    #[error("NAICS code {naics} mapped to both {first} and {second}")]
    DuplicateNaicsMapping {
        naics: String,
        first: String,
        second: String,
    },
    #[error("row {row}: duplicate key '{key}'")]
    DuplicateKey { row: usize, key: String },
    #[error("row {row}: coverage rate {rate} outside [0, {max}]")]
    CoverageOutOfRange { row: usize, rate: f64, max: f64 },
    #[error("row {row}: close date {close} precedes open date {open}")]
    CloseBeforeOpen {
        row: usize,
        open: NaiveDate,
        close: NaiveDate,
    },
    #[error("row {row}: hierarchy is not nested: {reason}")]
    NonNestedHierarchy { row: usize, reason: String },
    #[error("crosswalk weights for source {source_geoid} sum to {sum}, expected 1")]
    CrosswalkWeightSumViolation { source_geoid: String, sum: f64 },
    #[error("io error: {0}")]
    Io(String),
}

impl IngestError {
    /// Data row the error refers to, when it refers to one.
    pub fn row(&self) -> Option<usize> {
        use IngestError::*;
        match self {
            Csv { row, .. } => *row,
            MalformedBucketObject { row, .. }
            | MalformedHomeAreas { row, .. }
            | NonMondayWeekStart { row, .. }
            | NegativeCount { row, .. }
            | HomeAreaExceedsVisits { row, .. }
            | InvalidField { row, .. }
            | Geoid { row, .. }
            | DuplicateKey { row, .. }
            | CoverageOutOfRange { row, .. }
            | CloseBeforeOpen { row, .. }
            | NonNestedHierarchy { row, .. } => Some(*row),
            _ => None,
        }
    }
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

/// Records that parsed plus the rows that were skipped (lenient mode only).
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub skipped: Vec<IngestError>,
}

impl<T> Parsed<T> {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }

    /// Records skipped rows as diagnostics under `source`.
    pub fn report_skips(&self, source: &str, diags: &mut crate::Diagnostics) {
        for e in &self.skipped {
            let key = match e.row() {
                Some(r) => format!("{source}:{r}"),
                None => source.to_string(),
            };
            diags.push(crate::DiagnosticKind::SkippedRow, key, e.to_string());
        }
    }
}

/// Column positions resolved from a header row.
pub(crate) struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    pub(crate) fn from_headers(headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        Columns { index }
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize, IngestError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn {
                column: name.to_string(),
            })
    }

    pub(crate) fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

pub(crate) fn reader<R: std::io::Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

pub(crate) fn csv_error(row: Option<usize>, e: csv::Error) -> IngestError {
    IngestError::Csv {
        row,
        message: e.to_string(),
    }
}

pub(crate) fn field<'r>(record: &'r csv::StringRecord, idx: usize) -> &'r str {
    record.get(idx).unwrap_or("").trim()
}

pub(crate) fn parse_date(row: usize, column: &str, text: &str) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|e| IngestError::InvalidField {
        row,
        column: column.to_string(),
        reason: format!("'{text}' is not a yyyy-mm-dd date ({e})"),
    })
}

pub(crate) fn parse_f64(row: usize, column: &str, text: &str) -> Result<f64, IngestError> {
    let v: f64 = text.parse().map_err(|_| IngestError::InvalidField {
        row,
        column: column.to_string(),
        reason: format!("'{text}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::InvalidField {
            row,
            column: column.to_string(),
            reason: format!("'{text}' is not finite"),
        });
    }
    Ok(v)
}

pub(crate) fn parse_count(row: usize, column: &str, text: &str) -> Result<f64, IngestError> {
    let v = parse_f64(row, column, text)?;
    if v < 0.0 {
        return Err(IngestError::NegativeCount {
            row,
            field: column.to_string(),
        });
    }
    Ok(v)
}

/// Drives a row parser over a CSV stream, applying the strictness policy.
pub(crate) fn parse_rows<R, T, F>(
    input: R,
    strictness: Strictness,
    resolve: impl FnOnce(&Columns) -> Result<F, IngestError>,
) -> Result<Parsed<T>, IngestError>
where
    R: std::io::Read,
    F: FnMut(usize, &csv::StringRecord) -> Result<T, IngestError>,
{
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(None, e))?.clone();
    let columns = Columns::from_headers(&headers);
    let mut parse_row = resolve(&columns)?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let outcome = result
            .map_err(|e| csv_error(Some(row), e))
            .and_then(|rec| parse_row(row, &rec));
        match outcome {
            Ok(r) => records.push(r),
            Err(e) if strictness == Strictness::Lenient => skipped.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok(Parsed { records, skipped })
}

/// Formats a count so that integral values print without a fractional part.
pub(crate) fn format_number(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn write_err(e: csv::Error) -> IngestError {
    csv_error(None, e)
}
