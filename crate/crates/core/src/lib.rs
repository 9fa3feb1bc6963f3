//! Social-infrastructure time use (STU) measures computed from weekly POI
//! foot-traffic patterns.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ingest`] parses the five input tables (weekly patterns, device panel,
//!   POI catalog, NAICS category map, geographic hierarchy and crosswalk).
//! * [`measures`] turns bucketed dwell histograms into tract-level time totals
//!   and the per-user / per-visit measures.
//! * [`dispersion`] computes Shannon diversity of time use and the
//!   population-weighted Gini of per-user STU.
//! * [`aggregate`] rolls tract measures up to county subdivisions, counties
//!   and metropolitan areas, and apportions additive attributes across
//!   crosswalks.
//! * [`stats`] holds the validation battery: distribution fitting with KS
//!   selection, Moran's I, two-sample KS and Pearson correlation.
//! * [`synth`] generates visit-level synthetic data together with an
//!   independent brute-force oracle for every measure.
//! * [`pipeline`] and [`table`] wire everything together and read/write the
//!   weekly output tables.

pub mod aggregate;
pub mod category;
pub mod diagnostics;
pub mod dispersion;
pub mod ingest;
pub mod measures;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod table;

pub use aggregate::Level;
pub use category::{ActivityCategory, CategoryValues};
pub use diagnostics::{Diagnostic, DiagnosticKind, Diagnostics};
pub use ingest::Strictness;
pub use measures::DwellPolicy;
