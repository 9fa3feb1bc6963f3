use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Social-infrastructure activity categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActivityCategory {
    Grocery,
    Consume,
    Sports,
    Events,
    Dining,
    Arts,
    Religious,
}

impl ActivityCategory {
    pub const ALL: [ActivityCategory; 7] = [
        ActivityCategory::Grocery,
        ActivityCategory::Consume,
        ActivityCategory::Sports,
        ActivityCategory::Events,
        ActivityCategory::Dining,
        ActivityCategory::Arts,
        ActivityCategory::Religious,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column suffix used in output tables (`Per_User_STU_<name>`).
    pub fn name(self) -> &'static str {
        match self {
            ActivityCategory::Grocery => "Grocery",
            ActivityCategory::Consume => "Consume",
            ActivityCategory::Sports => "Sports",
            ActivityCategory::Events => "Events",
            ActivityCategory::Dining => "Dining",
            ActivityCategory::Arts => "Arts",
            ActivityCategory::Religious => "Religious",
        }
    }
}

impl fmt::Display for ActivityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory(pub String);

impl fmt::Display for UnknownCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown activity category '{}'", self.0)
    }
}

impl std::error::Error for UnknownCategory {}

impl FromStr for ActivityCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        ActivityCategory::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// One value for the `All` pseudo-category plus one per activity category.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CategoryValues<T> {
    pub all: T,
    pub by_category: [T; 7],
}

impl<T: Copy> CategoryValues<T> {
    pub fn splat(v: T) -> Self {
        CategoryValues {
            all: v,
            by_category: [v; 7],
        }
    }

    pub fn get(&self, category: ActivityCategory) -> T {
        self.by_category[category.index()]
    }

    pub fn set(&mut self, category: ActivityCategory, value: T) {
        self.by_category[category.index()] = value;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> CategoryValues<U> {
        CategoryValues {
            all: f(self.all),
            by_category: self.by_category.map(f),
        }
    }

    /// `All` first, then categories in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        std::iter::once(self.all).chain(self.by_category.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_names_parse_back() {
        for c in ActivityCategory::ALL {
            assert_eq!(c.name().parse::<ActivityCategory>().unwrap(), c);
            assert_eq!(c.name().to_lowercase().parse::<ActivityCategory>().unwrap(), c);
        }
        assert!("Art".parse::<ActivityCategory>().is_err());
    }

    #[test]
    fn index_matches_position() {
        for (i, c) in ActivityCategory::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }
}
