//! POI catalog.
//!
//! Columns: `poi_id,naics,latitude,longitude,colocation_key,tract_geoid,
//! open_date,close_date` (dates optional).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::geoid::{check_geoid, Naics};
use super::{field, parse_date, parse_f64, parse_rows, IngestError, Parsed, Strictness};

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub poi_id: String,
    pub naics: Naics,
    pub latitude: f64,
    pub longitude: f64,
    /// Shared by POIs whose polygons coincide (and whose raw records are
    /// duplicated by the feed).
    pub colocation_key: String,
    pub tract_geoid: String,
    pub open_date: Option<NaiveDate>,
    pub close_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default)]
pub struct PoiCatalog {
    by_id: BTreeMap<String, PoiRecord>,
}

impl PoiCatalog {
    /// Fails on duplicate `poi_id`s, returning the offending id.
    pub fn new(records: impl IntoIterator<Item = PoiRecord>) -> Result<Self, String> {
        let mut by_id = BTreeMap::new();
        for r in records {
            if let Some(prev) = by_id.insert(r.poi_id.clone(), r) {
                return Err(prev.poi_id);
            }
        }
        Ok(PoiCatalog { by_id })
    }

    pub fn get(&self, poi_id: &str) -> Option<&PoiRecord> {
        self.by_id.get(poi_id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PoiRecord> {
        self.by_id.values()
    }
}

fn optional_date(row: usize, column: &str, text: &str) -> Result<Option<NaiveDate>, IngestError> {
    if text.is_empty() {
        Ok(None)
    } else {
        parse_date(row, column, text).map(Some)
    }
}

pub fn load_poi_catalog<R: Read>(
    input: R,
    strictness: Strictness,
) -> Result<Parsed<PoiRecord>, IngestError> {
    let parsed = parse_rows(input, strictness, |cols| {
        let id = cols.require("poi_id")?;
        let naics = cols.require("naics")?;
        let lat = cols.require("latitude")?;
        let lon = cols.require("longitude")?;
        let coloc = cols.require("colocation_key")?;
        let tract = cols.require("tract_geoid")?;
        let open = cols.optional("open_date");
        let close = cols.optional("close_date");
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let poi_id = field(rec, id);
            if poi_id.is_empty() {
                return Err(IngestError::InvalidField {
                    row,
                    column: "poi_id".into(),
                    reason: "empty".into(),
                });
            }
            let naics: Naics = field(rec, naics)
                .parse()
                .map_err(|source| IngestError::Geoid { row, source })?;
            let latitude = parse_f64(row, "latitude", field(rec, lat))?;
            let longitude = parse_f64(row, "longitude", field(rec, lon))?;
            if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
                return Err(IngestError::InvalidField {
                    row,
                    column: "latitude/longitude".into(),
                    reason: format!("({latitude}, {longitude}) out of range"),
                });
            }
            let tract_geoid = field(rec, tract);
            check_geoid(tract_geoid, 11).map_err(|source| IngestError::Geoid { row, source })?;
            let colocation_key = match field(rec, coloc) {
                "" => poi_id.to_string(),
                k => k.to_string(),
            };
            let open_date = optional_date(row, "open_date", open.map_or("", |i| field(rec, i)))?;
            let close_date =
                optional_date(row, "close_date", close.map_or("", |i| field(rec, i)))?;
            if let (Some(open), Some(close)) = (open_date, close_date) {
                if close < open {
                    return Err(IngestError::CloseBeforeOpen { row, open, close });
                }
            }
            Ok(PoiRecord {
                poi_id: poi_id.to_string(),
                naics,
                latitude,
                longitude,
                colocation_key,
                tract_geoid: tract_geoid.to_string(),
                open_date,
                close_date,
            })
        })
    })?;
    let mut seen = std::collections::HashSet::new();
    for (i, r) in parsed.records.iter().enumerate() {
        if !seen.insert(r.poi_id.as_str()) {
            return Err(IngestError::DuplicateKey {
                row: i + 1,
                key: r.poi_id.clone(),
            });
        }
    }
    Ok(parsed)
}

pub fn write_poi_catalog<W: Write>(output: W, pois: &[PoiRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record([
        "poi_id",
        "naics",
        "latitude",
        "longitude",
        "colocation_key",
        "tract_geoid",
        "open_date",
        "close_date",
    ])
    .map_err(super::write_err)?;
    let date = |d: Option<NaiveDate>| d.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
    for p in pois {
        w.write_record([
            p.poi_id.clone(),
            p.naics.to_string(),
            p.latitude.to_string(),
            p.longitude.to_string(),
            p.colocation_key.clone(),
            p.tract_geoid.clone(),
            date(p.open_date),
            date(p.close_date),
        ])
        .map_err(super::write_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "poi_id,naics,latitude,longitude,colocation_key,tract_geoid,open_date,close_date\n";

    #[test]
    fn parses_and_defaults_colocation_key() {
        let csv = format!("{HEADER}p1,722511,27.9,-82.4,,12057010100,2019-01-01,\n");
        let parsed = load_poi_catalog(csv.as_bytes(), Strictness::Strict).unwrap();
        let p = &parsed.records[0];
        assert_eq!(p.colocation_key, "p1");
        assert_eq!(p.close_date, None);
    }

    #[test]
    fn close_before_open_rejected() {
        let csv = format!("{HEADER}p1,722511,27.9,-82.4,k,12057010100,2020-01-01,2019-01-01\n");
        assert!(matches!(
            load_poi_catalog(csv.as_bytes(), Strictness::Strict).unwrap_err(),
            IngestError::CloseBeforeOpen { row: 1, .. }
        ));
    }

    #[test]
    fn bad_naics_and_tract_rejected() {
        let csv = format!("{HEADER}p1,72251,27.9,-82.4,k,12057010100,,\np2,722511,27.9,-82.4,k,1205701010,,\n");
        let parsed = load_poi_catalog(csv.as_bytes(), Strictness::Lenient).unwrap();
        assert_eq!(parsed.skip_count(), 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = format!("{HEADER}p1,722511,1,1,,12057010100,,\np1,722511,1,1,,12057010100,,\n");
        assert!(matches!(
            load_poi_catalog(csv.as_bytes(), Strictness::Lenient).unwrap_err(),
            IngestError::DuplicateKey { row: 2, .. }
        ));
    }
}
