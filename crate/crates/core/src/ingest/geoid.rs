use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeoidError {
    #[error("bad GEOID length: '{geoid}' must be {expected} digits")]
    BadGeoidLength { geoid: String, expected: usize },
    #[error("bad NAICS code '{0}': expected 6 digits")]
    BadNaics(String),
}

pub fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

pub(crate) fn check_geoid(geoid: &str, expected: usize) -> Result<(), GeoidError> {
    if geoid.len() == expected && is_digits(geoid) {
        Ok(())
    } else {
        Err(GeoidError::BadGeoidLength {
            geoid: geoid.to_string(),
            expected,
        })
    }
}

/// Census tract of a 12-digit block-group GEOID.
///
/// Tract GEOIDs are rejected rather than passed through, so applying this
/// twice is an error.
pub fn cbg_to_tract(cbg: &str) -> Result<String, GeoidError> {
    check_geoid(cbg, 12)?;
    Ok(cbg[..11].to_string())
}

/// Six-digit NAICS industry code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Naics(String);

impl Naics {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Naics {
    type Err = GeoidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.len() == 6 && is_digits(t) {
            Ok(Naics(t.to_string()))
        } else {
            Err(GeoidError::BadNaics(s.to_string()))
        }
    }
}

impl fmt::Display for Naics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tract_is_eleven_digit_prefix() {
        assert_eq!(cbg_to_tract("120310103011").unwrap(), "12031010301");
        assert_eq!(cbg_to_tract("000000000000").unwrap(), "00000000000");
    }

    #[test]
    fn tract_extraction_rejects_tracts_and_junk() {
        assert!(matches!(
            cbg_to_tract("12031010301"),
            Err(GeoidError::BadGeoidLength { expected: 12, .. })
        ));
        assert!(cbg_to_tract("12031010301a").is_err());
        assert!(cbg_to_tract("").is_err());
        let tract = cbg_to_tract("120310103011").unwrap();
        assert!(cbg_to_tract(&tract).is_err());
    }

    #[test]
    fn naics_requires_six_digits() {
        assert_eq!("722511".parse::<Naics>().unwrap().as_str(), "722511");
        assert!("72251".parse::<Naics>().is_err());
        assert!("72251x".parse::<Naics>().is_err());
    }
}
