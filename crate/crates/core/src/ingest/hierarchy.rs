//! Geographic hierarchy and crosswalk tables.
//!
//! Hierarchy columns: `tract_geoid,county_subdivision_geoid,county_geoid,
//! metro_geoid` (metro optional, a 5-digit CBSA code).
//! Crosswalk columns: `source_geoid,target_geoid,weight`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::geoid::check_geoid;
use super::{field, parse_f64, parse_rows, IngestError, Strictness};
use crate::Level;

/// Tolerance on the per-source sum of crosswalk weights.
pub const CROSSWALK_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TractMembership {
    pub county_subdivision_geoid: String,
    pub county_geoid: String,
    pub metro_geoid: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosswalkWeight {
    pub source_geoid: String,
    pub target_geoid: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Crosswalk {
    weights: Vec<CrosswalkWeight>,
}

impl Crosswalk {
    /// Validates weight ranges and per-source sums.
    pub fn new(weights: Vec<CrosswalkWeight>) -> Result<Self, IngestError> {
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for (i, w) in weights.iter().enumerate() {
            if !(0.0..=1.0).contains(&w.weight) {
                return Err(IngestError::InvalidField {
                    row: i + 1,
                    column: "weight".into(),
                    reason: format!("{} outside [0, 1]", w.weight),
                });
            }
            *sums.entry(&w.source_geoid).or_default() += w.weight;
        }
        if let Some((src, &sum)) = sums
            .iter()
            .find(|(_, &s)| (s - 1.0).abs() > CROSSWALK_SUM_TOLERANCE)
        {
            return Err(IngestError::CrosswalkWeightSumViolation {
                source_geoid: src.to_string(),
                sum,
            });
        }
        Ok(Crosswalk { weights })
    }

    pub fn weights(&self) -> &[CrosswalkWeight] {
        &self.weights
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights grouped by source GEOID.
    pub fn by_source(&self) -> BTreeMap<&str, Vec<&CrosswalkWeight>> {
        let mut out: BTreeMap<&str, Vec<&CrosswalkWeight>> = BTreeMap::new();
        for w in &self.weights {
            out.entry(w.source_geoid.as_str()).or_default().push(w);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeoHierarchy {
    pub tracts: BTreeMap<String, TractMembership>,
    pub crosswalk: Crosswalk,
}

impl GeoHierarchy {
    pub fn membership(&self, tract: &str) -> Option<&TractMembership> {
        self.tracts.get(tract)
    }

    /// GEOID of the unit containing `tract` at `level`.
    pub fn unit_of<'a>(&'a self, tract: &'a str, level: Level) -> Option<&'a str> {
        match level {
            Level::Tract => Some(tract),
            _ => {
                let m = self.tracts.get(tract)?;
                match level {
                    Level::CountySubdivision => Some(&m.county_subdivision_geoid),
                    Level::County => Some(&m.county_geoid),
                    Level::Metro => m.metro_geoid.as_deref(),
                    Level::Tract => unreachable!(),
                }
            }
        }
    }

    /// Member tracts of every unit at `level`.
    pub fn members(&self, level: Level) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for tract in self.tracts.keys() {
            if let Some(unit) = self.unit_of(tract, level) {
                out.entry(unit.to_string()).or_default().push(tract.clone());
            }
        }
        out
    }
}

fn geoid_field(row: usize, text: &str, len: usize) -> Result<String, IngestError> {
    check_geoid(text, len).map_err(|source| IngestError::Geoid { row, source })?;
    Ok(text.to_string())
}

/// Loads tract membership; a crosswalk can be attached with [`load_crosswalk`].
pub fn load_hierarchy<R: Read>(input: R) -> Result<GeoHierarchy, IngestError> {
    let parsed = parse_rows(input, Strictness::Strict, |cols| {
        let tract = cols.require("tract_geoid")?;
        let cousub = cols.require("county_subdivision_geoid")?;
        let county = cols.require("county_geoid")?;
        let metro = cols.optional("metro_geoid");
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let t = geoid_field(row, field(rec, tract), 11)?;
            let cs = geoid_field(row, field(rec, cousub), 10)?;
            let c = geoid_field(row, field(rec, county), 5)?;
            let m = match metro.map(|i| field(rec, i)) {
                None | Some("") => None,
                Some(text) => Some(geoid_field(row, text, 5)?),
            };
            if t[..5] != c {
                return Err(IngestError::NonNestedHierarchy {
                    row,
                    reason: format!("county {c} is not the prefix of tract {t}"),
                });
            }
            if cs[..5] != c {
                return Err(IngestError::NonNestedHierarchy {
                    row,
                    reason: format!("county subdivision {cs} lies outside county {c}"),
                });
            }
            Ok((
                t,
                TractMembership {
                    county_subdivision_geoid: cs,
                    county_geoid: c,
                    metro_geoid: m,
                },
            ))
        })
    })?;
    let mut tracts = BTreeMap::new();
    let mut county_metro: BTreeMap<String, Option<String>> = BTreeMap::new();
    for (i, (t, m)) in parsed.records.into_iter().enumerate() {
        let row = i + 1;
        match county_metro.get(&m.county_geoid) {
            Some(prev) if *prev != m.metro_geoid => {
                return Err(IngestError::NonNestedHierarchy {
                    row,
                    reason: format!("county {} assigned to more than one metro", m.county_geoid),
                })
            }
            _ => {
                county_metro.insert(m.county_geoid.clone(), m.metro_geoid.clone());
            }
        }
        if tracts.insert(t.clone(), m).is_some() {
            return Err(IngestError::DuplicateKey { row, key: t });
        }
    }
    Ok(GeoHierarchy {
        tracts,
        crosswalk: Crosswalk::default(),
    })
}

pub fn load_crosswalk<R: Read>(input: R) -> Result<Crosswalk, IngestError> {
    let parsed = parse_rows(input, Strictness::Strict, |cols| {
        let src = cols.require("source_geoid")?;
        let tgt = cols.require("target_geoid")?;
        let weight = cols.require("weight")?;
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let source_geoid = field(rec, src);
            let target_geoid = field(rec, tgt);
            for (col, g) in [("source_geoid", source_geoid), ("target_geoid", target_geoid)] {
                if !super::is_digits(g) {
                    return Err(IngestError::InvalidField {
                        row,
                        column: col.into(),
                        reason: format!("'{g}' is not a GEOID"),
                    });
                }
            }
            Ok(CrosswalkWeight {
                source_geoid: source_geoid.to_string(),
                target_geoid: target_geoid.to_string(),
                weight: parse_f64(row, "weight", field(rec, weight))?,
            })
        })
    })?;
    Crosswalk::new(parsed.records)
}

pub fn write_hierarchy<W: Write>(output: W, hierarchy: &GeoHierarchy) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record([
        "tract_geoid",
        "county_subdivision_geoid",
        "county_geoid",
        "metro_geoid",
    ])
    .map_err(super::write_err)?;
    for (t, m) in &hierarchy.tracts {
        w.write_record([
            t.as_str(),
            &m.county_subdivision_geoid,
            &m.county_geoid,
            m.metro_geoid.as_deref().unwrap_or(""),
        ])
        .map_err(super::write_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_crosswalk<W: Write>(output: W, crosswalk: &Crosswalk) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["source_geoid", "target_geoid", "weight"])
        .map_err(super::write_err)?;
    for c in crosswalk.weights() {
        w.write_record([
            c.source_geoid.clone(),
            c.target_geoid.clone(),
            c.weight.to_string(),
        ])
        .map_err(super::write_err)?;
    }
    w.flush()?;
    Ok(())
}
