//! Structured side-channel for non-fatal events (skipped rows, absent
//! measures, flagged coverage rates, ...).

use std::fmt;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagnosticKind {
    SkippedRow,
    UnknownPoi,
    OutOfScopePoi,
    NoDwellInformation,
    NonIdenticalColocatedGroup,
    ZeroDeviceCount,
    MissingPanelMonth,
    MissingPopulation,
    CoverageAboveOne,
    CoverageUndefined,
    TractNotInHierarchy,
    EmptyUnit,
    DegenerateRegion,
    UnmappedSource,
    IncompleteCategoryMap,
    PooledDiversity,
    EmptyInput,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::SkippedRow => "skipped_row",
            DiagnosticKind::UnknownPoi => "unknown_poi",
            DiagnosticKind::OutOfScopePoi => "out_of_scope_poi",
            DiagnosticKind::NoDwellInformation => "no_dwell_information",
            DiagnosticKind::NonIdenticalColocatedGroup => "non_identical_colocated_group",
            DiagnosticKind::ZeroDeviceCount => "zero_device_count",
            DiagnosticKind::MissingPanelMonth => "missing_panel_month",
            DiagnosticKind::MissingPopulation => "missing_population",
            DiagnosticKind::CoverageAboveOne => "coverage_above_one",
            DiagnosticKind::CoverageUndefined => "coverage_undefined",
            DiagnosticKind::TractNotInHierarchy => "tract_not_in_hierarchy",
            DiagnosticKind::EmptyUnit => "empty_unit",
            DiagnosticKind::DegenerateRegion => "degenerate_region",
            DiagnosticKind::UnmappedSource => "unmapped_source",
            DiagnosticKind::IncompleteCategoryMap => "incomplete_category_map",
            DiagnosticKind::PooledDiversity => "pooled_diversity",
            DiagnosticKind::EmptyInput => "empty_input",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub key: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    events: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: DiagnosticKind, key: impl Into<String>, detail: impl Into<String>) {
        self.events.push(Diagnostic {
            kind,
            key: key.into(),
            detail: detail.into(),
        });
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.events.extend(other.events);
    }

    pub fn events(&self) -> &[Diagnostic] {
        &self.events
    }

    pub fn count(&self, kind: DiagnosticKind) -> usize {
        self.events.iter().filter(|d| d.kind == kind).count()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Writes `kind,key,detail` CSV, one line per event.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kind", "key", "detail"])?;
        for d in &self.events {
            w.write_record([d.kind.as_str(), d.key.as_str(), d.detail.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}
