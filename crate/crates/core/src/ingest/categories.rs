//! NAICS → activity category map. Columns: `naics,category`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::geoid::Naics;
use super::{field, parse_rows, IngestError, Strictness};
use crate::ActivityCategory;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    by_code: BTreeMap<Naics, ActivityCategory>,
}

impl CategoryMap {
    /// Builds a map, rejecting a code assigned to two different categories.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (Naics, ActivityCategory)>,
    ) -> Result<Self, IngestError> {
        let mut by_code: BTreeMap<Naics, ActivityCategory> = BTreeMap::new();
        for (code, cat) in pairs {
            if let Some(&prev) = by_code.get(&code) {
                if prev != cat {
                    return Err(IngestError::DuplicateNaicsMapping {
                        naics: code.to_string(),
                        first: prev.to_string(),
                        second: cat.to_string(),
                    });
                }
            }
            by_code.insert(code, cat);
        }
        Ok(CategoryMap { by_code })
    }

    pub fn category(&self, naics: &Naics) -> Option<ActivityCategory> {
        self.by_code.get(naics).copied()
    }

    pub fn len(&self) -> usize {
        self.by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_code.is_empty()
    }

    /// Categories with no NAICS code assigned.
    pub fn missing_categories(&self) -> Vec<ActivityCategory> {
        ActivityCategory::ALL
            .into_iter()
            .filter(|c| !self.by_code.values().any(|v| v == c))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Naics, ActivityCategory)> {
        self.by_code.iter().map(|(k, &v)| (k, v))
    }
}

pub fn load_category_map<R: Read>(input: R) -> Result<CategoryMap, IngestError> {
    let parsed = parse_rows(input, Strictness::Strict, |cols| {
        let naics = cols.require("naics")?;
        let category = cols.require("category")?;
        Ok(move |row: usize, rec: &csv::StringRecord| {
            let code: Naics = field(rec, naics)
                .parse()
                .map_err(|source| IngestError::Geoid { row, source })?;
            let cat: ActivityCategory =
                field(rec, category)
                    .parse()
                    .map_err(|e: crate::category::UnknownCategory| IngestError::InvalidField {
                        row,
                        column: "category".into(),
                        reason: e.to_string(),
                    })?;
            Ok((code, cat))
        })
    })?;
    CategoryMap::from_pairs(parsed.records)
}

pub fn write_category_map<W: Write>(output: W, map: &CategoryMap) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["naics", "category"]).map_err(super::write_err)?;
    for (code, cat) in map.iter() {
        w.write_record([code.as_str(), cat.name()])
            .map_err(super::write_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restaurant_and_church_map() {
        let csv = "naics,category\n722511,Dining\n813110,Religious\n";
        let map = load_category_map(csv.as_bytes()).unwrap();
        assert_eq!(
            map.category(&"722511".parse().unwrap()),
            Some(ActivityCategory::Dining)
        );
        assert_eq!(
            map.category(&"813110".parse().unwrap()),
            Some(ActivityCategory::Religious)
        );
        assert_eq!(map.missing_categories().len(), 5);
    }

    #[test]
    fn conflicting_mapping_rejected() {
        let csv = "naics,category\n722511,Dining\n722511,Arts\n";
        assert!(matches!(
            load_category_map(csv.as_bytes()).unwrap_err(),
            IngestError::DuplicateNaicsMapping { .. }
        ));
    }

    #[test]
    fn unknown_category_rejected() {
        let csv = "naics,category\n722511,Nightlife\n";
        assert!(matches!(
            load_category_map(csv.as_bytes()).unwrap_err(),
            IngestError::InvalidField { row: 1, .. }
        ));
    }
}
