//! End-to-end orchestration: read an input directory, compute every level's
//! weekly table, write the results.
//!
//! Input directory layout:
//!
//! | file             | contents                                   |
//! |------------------|--------------------------------------------|
//! | `pois.csv`       | POI catalog                                |
//! | `patterns.csv`   | weekly patterns                            |
//! | `panel.csv`      | monthly device panel                       |
//! | `categories.csv` | NAICS → activity category map              |
//! | `hierarchy.csv`  | tract → county subdivision / county / metro |
//!
//! Output: `<level>/<yyyy-mm-dd>.csv` per level and week, plus
//! `diagnostics.csv` and `panel_coverage.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{
    aggregate_diversity, aggregate_per_user, aggregate_per_visit, compute_region_gini,
    RegionGiniInput, TractDiversity,
};
use crate::dispersion::shannon_entropy;
use crate::ingest::{
    load_category_map, load_hierarchy, load_poi_catalog, parse_panel, parse_weekly_patterns,
    CategoryMap, CoverageFlag, GeoHierarchy, IngestError, PanelIndex, PanelObservation, PoiCatalog,
    Strictness, WeeklyPattern, YearMonth,
};
use crate::measures::{
    dedup_by_colocation, foundational_stu, split_by_week, tract_category_time, DwellPolicy,
    MeasureError,
};
use crate::table::{write_table, FloatFormat, StuRecord};
use crate::{DiagnosticKind, Diagnostics, Level};

pub const POIS_FILE: &str = "pois.csv";
pub const PATTERNS_FILE: &str = "patterns.csv";
pub const PANEL_FILE: &str = "panel.csv";
pub const CATEGORIES_FILE: &str = "categories.csv";
pub const HIERARCHY_FILE: &str = "hierarchy.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const COVERAGE_FILE: &str = "panel_coverage.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{file}: {source}")]
    Ingest {
        file: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ingest_err(path: &Path) -> impl FnOnce(IngestError) -> PipelineError + '_ {
    move |source| PipelineError::Ingest {
        file: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub catalog: PoiCatalog,
    pub patterns: Vec<WeeklyPattern>,
    pub panel: Vec<PanelObservation>,
    pub category_map: CategoryMap,
    pub hierarchy: GeoHierarchy,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub policy: DwellPolicy,
    pub strictness: Strictness,
    pub levels: Vec<Level>,
    pub float_format: FloatFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            policy: DwellPolicy::default(),
            strictness: Strictness::Lenient,
            levels: Level::ALL.to_vec(),
            float_format: FloatFormat::RoundTrip,
        }
    }
}

/// Panel coverage of one geography-month: tracts come from the panel file,
/// counties and states are sums over their tracts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub level: &'static str,
    pub geoid: String,
    pub month: YearMonth,
    pub device_count: u64,
    pub population: Option<u64>,
    pub coverage_rate: Option<f64>,
    pub flag: CoverageFlag,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub tables: BTreeMap<(Level, NaiveDate), Vec<StuRecord>>,
    pub coverage: Vec<CoverageRow>,
    pub diagnostics: Diagnostics,
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Reads the five input tables from `dir`.
pub fn load_inputs(
    dir: &Path,
    strictness: Strictness,
    diags: &mut Diagnostics,
) -> Result<PipelineInputs, PipelineError> {
    let path = dir.join(POIS_FILE);
    let pois = load_poi_catalog(open(&path)?, strictness).map_err(ingest_err(&path))?;
    pois.report_skips(POIS_FILE, diags);
    let catalog = PoiCatalog::new(pois.records).map_err(|key| PipelineError::Ingest {
        file: path.clone(),
        source: IngestError::DuplicateKey { row: 0, key },
    })?;

    let path = dir.join(PATTERNS_FILE);
    let patterns = parse_weekly_patterns(open(&path)?, strictness).map_err(ingest_err(&path))?;
    patterns.report_skips(PATTERNS_FILE, diags);

    let path = dir.join(PANEL_FILE);
    let panel = parse_panel(open(&path)?, strictness).map_err(ingest_err(&path))?;
    panel.report_skips(PANEL_FILE, diags);

    let path = dir.join(CATEGORIES_FILE);
    let category_map = load_category_map(open(&path)?).map_err(ingest_err(&path))?;
    let missing = category_map.missing_categories();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|c| c.name()).collect();
        diags.push(
            DiagnosticKind::IncompleteCategoryMap,
            CATEGORIES_FILE,
            format!("no NAICS codes for {}", names.join(", ")),
        );
    }

    let path = dir.join(HIERARCHY_FILE);
    let hierarchy = load_hierarchy(open(&path)?).map_err(ingest_err(&path))?;

    Ok(PipelineInputs {
        catalog,
        patterns: patterns.records,
        panel: panel.records,
        category_map,
        hierarchy,
    })
}

fn tract_records(
    stu: &[crate::measures::FoundationalStu],
    diversity: &BTreeMap<String, Option<f64>>,
) -> Vec<StuRecord> {
    stu.iter()
        .map(|t| StuRecord {
            geoid: t.tract_geoid.clone(),
            week_start: t.week_start,
            per_user: t.per_user,
            per_visit: t.per_visit,
            diversity: diversity.get(&t.tract_geoid).copied().flatten(),
            gini: None,
        })
        .collect()
}

fn compute_week(
    week: NaiveDate,
    patterns: Vec<WeeklyPattern>,
    inputs: &PipelineInputs,
    panel: &PanelIndex,
    config: &PipelineConfig,
) -> Result<(Vec<(Level, Vec<StuRecord>)>, Diagnostics), PipelineError> {
    let mut diags = Diagnostics::new();
    let deduped = dedup_by_colocation(patterns, &inputs.catalog, &mut diags);
    let table = tract_category_time(
        &deduped,
        &inputs.catalog,
        &inputs.category_map,
        &config.policy,
        config.strictness,
        &mut diags,
    )?;
    let stu = foundational_stu(
        &table,
        week,
        inputs.hierarchy.tracts.keys().map(String::as_str),
        panel,
        config.strictness,
        &mut diags,
    )?;

    let diversity: BTreeMap<String, Option<f64>> = stu
        .iter()
        .map(|t| {
            let h = table
                .get(week, &t.tract_geoid)
                .and_then(|acc| shannon_entropy(acc.sector_minutes.values().copied()).ok());
            (t.tract_geoid.clone(), h)
        })
        .collect();
    let tract_diversity: Vec<TractDiversity> = stu
        .iter()
        .map(|t| TractDiversity {
            tract_geoid: t.tract_geoid.clone(),
            week_start: week,
            diversity: diversity[&t.tract_geoid],
            device_count: t.device_count,
        })
        .collect();
    let gini_inputs: Vec<RegionGiniInput> = stu
        .iter()
        .map(|t| RegionGiniInput {
            tract_geoid: t.tract_geoid.clone(),
            week_start: week,
            per_user: t.per_user.all,
            population: t.population.map(|p| p as f64),
        })
        .collect();

    let mut out = Vec::new();
    for &level in &config.levels {
        if level == Level::Tract {
            out.push((level, tract_records(&stu, &diversity)));
            continue;
        }
        let per_user = aggregate_per_user(&stu, &inputs.hierarchy, level, &mut diags);
        let per_visit = aggregate_per_visit(&stu, &inputs.hierarchy, level, &mut diags);
        let div = aggregate_diversity(&tract_diversity, &inputs.hierarchy, level, &mut diags);
        let gini = compute_region_gini(&gini_inputs, &inputs.hierarchy, level, &mut diags);
        let mut records: BTreeMap<String, StuRecord> = BTreeMap::new();
        fn slot<'m>(
            records: &'m mut BTreeMap<String, StuRecord>,
            geoid: &str,
            week: NaiveDate,
        ) -> &'m mut StuRecord {
            records
                .entry(geoid.to_string())
                .or_insert_with(|| StuRecord::empty(geoid, week))
        }
        for (k, v) in per_user {
            slot(&mut records, &k.geoid, week).per_user = v;
        }
        for (k, v) in per_visit {
            slot(&mut records, &k.geoid, week).per_visit = v;
        }
        for (k, v) in div {
            if let Some(h) = v {
                if let Some(pooled) = pooled_entropy(&table, week, &inputs.hierarchy, level, &k.geoid) {
                    diags.push(
                        DiagnosticKind::PooledDiversity,
                        format!("{level}:{}@{week}", k.geoid),
                        format!("device-weighted {h}; pooled profile {pooled}"),
                    );
                }
            }
            slot(&mut records, &k.geoid, week).diversity = v;
        }
        for (k, v) in gini {
            slot(&mut records, &k.geoid, week).gini = v;
        }
        out.push((level, records.into_values().collect()));
    }
    Ok((out, diags))
}

/// Entropy of the sector profile summed over a unit's member tracts, for
/// comparison with the device-weighted mean that is emitted.
fn pooled_entropy(
    table: &crate::measures::TractTimeTable,
    week: NaiveDate,
    hierarchy: &GeoHierarchy,
    level: Level,
    unit: &str,
) -> Option<f64> {
    let mut pooled: BTreeMap<&crate::ingest::Naics, f64> = BTreeMap::new();
    for (tract, _) in hierarchy.tracts.iter().filter(|(t, _)| hierarchy.unit_of(t, level) == Some(unit)) {
        if let Some(acc) = table.get(week, tract) {
            for (naics, m) in &acc.sector_minutes {
                *pooled.entry(naics).or_default() += m;
            }
        }
    }
    shannon_entropy(pooled.values().copied()).ok()
}

/// Panel coverage for tracts plus county and state roll-ups. Roll-ups sum
/// tract rows only; a roll-up's population is absent if any member lacks one.
pub fn panel_coverage(panel: &[PanelObservation], diags: &mut Diagnostics) -> Vec<CoverageRow> {
    let mut tracts: Vec<&PanelObservation> = panel.iter().filter(|o| o.geoid.len() == 11).collect();
    tracts.sort_by(|a, b| (a.month, &a.geoid).cmp(&(b.month, &b.geoid)));
    let mut rollups: BTreeMap<(usize, String, YearMonth), (u64, Option<u64>)> = BTreeMap::new();
    let mut rows = Vec::new();
    for o in tracts {
        rows.push(coverage_row("tract", o.geoid.clone(), o.month, o.device_count, o.population));
        for len in [5, 2] {
            let e = rollups
                .entry((len, o.geoid[..len].to_string(), o.month))
                .or_insert((0, Some(0)));
            e.0 += o.device_count;
            e.1 = e.1.zip(o.population).map(|(a, b)| a + b);
        }
    }
    for ((len, geoid, month), (devices, population)) in rollups.into_iter().rev() {
        let level = if len == 5 { "county" } else { "state" };
        rows.push(coverage_row(level, geoid, month, devices, population));
    }
    rows.sort_by(|a, b| {
        let rank = |l: &str| match l {
            "tract" => 0,
            "county" => 1,
            _ => 2,
        };
        (rank(a.level), a.month, &a.geoid).cmp(&(rank(b.level), b.month, &b.geoid))
    });
    for r in &rows {
        let key = format!("{}:{}@{}", r.level, r.geoid, r.month);
        match r.flag {
            CoverageFlag::AboveOne => diags.push(
                DiagnosticKind::CoverageAboveOne,
                key,
                format!("{} devices for {} residents", r.device_count, r.population.unwrap_or(0)),
            ),
            CoverageFlag::Undefined => diags.push(
                DiagnosticKind::CoverageUndefined,
                key,
                format!("{} devices with zero population", r.device_count),
            ),
            CoverageFlag::Ok => {
                if r.population.is_none() && r.level == "tract" {
                    diags.push(DiagnosticKind::MissingPopulation, key, "coverage rate absent");
                }
            }
        }
    }
    rows
}

fn coverage_row(
    level: &'static str,
    geoid: String,
    month: YearMonth,
    device_count: u64,
    population: Option<u64>,
) -> CoverageRow {
    let obs = PanelObservation {
        geoid,
        month,
        device_count,
        population,
    };
    CoverageRow {
        level,
        coverage_rate: obs.coverage_rate(),
        flag: obs.coverage_flag(),
        geoid: obs.geoid,
        month,
        device_count,
        population,
    }
}

/// Runs every week in parallel; results are merged in week order.
pub fn run(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let mut output = PipelineOutput::default();
    let panel = PanelIndex::new(inputs.panel.iter().cloned());
    output.coverage = panel_coverage(&inputs.panel, &mut output.diagnostics);
    if inputs.patterns.is_empty() {
        output
            .diagnostics
            .push(DiagnosticKind::EmptyInput, PATTERNS_FILE, "no weekly patterns; nothing to compute");
        return Ok(output);
    }
    let weeks: Vec<(NaiveDate, Vec<WeeklyPattern>)> =
        split_by_week(inputs.patterns.clone()).into_iter().collect();
    let results: Vec<_> = weeks
        .into_par_iter()
        .map(|(week, patterns)| {
            compute_week(week, patterns, inputs, &panel, config).map(|r| (week, r))
        })
        .collect();
    for r in results {
        let (week, (tables, diags)) = r?;
        output.diagnostics.extend(diags);
        for (level, records) in tables {
            output.tables.insert((level, week), records);
        }
    }
    Ok(output)
}

pub fn level_dir(output_dir: &Path, level: Level) -> PathBuf {
    output_dir.join(level.name())
}

pub fn table_path(output_dir: &Path, level: Level, week: NaiveDate) -> PathBuf {
    level_dir(output_dir, level).join(format!("{}.csv", week.format("%Y-%m-%d")))
}

pub fn write_coverage<W: std::io::Write>(output: W, rows: &[CoverageRow]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["level", "geoid", "month", "device_count", "population", "coverage_rate", "flag"])
        .map_err(crate::ingest::write_err)?;
    for r in rows {
        let flag = match r.flag {
            CoverageFlag::Ok => "ok",
            CoverageFlag::AboveOne => "above_one",
            CoverageFlag::Undefined => "undefined",
        };
        w.write_record([
            r.level.to_string(),
            r.geoid.clone(),
            r.month.to_string(),
            r.device_count.to_string(),
            r.population.map(|p| p.to_string()).unwrap_or_default(),
            r.coverage_rate.map(|c| format!("{c}")).unwrap_or_default(),
            flag.to_string(),
        ])
        .map_err(crate::ingest::write_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes tables, diagnostics and the coverage summary under `output_dir`.
pub fn write_outputs(
    output: &PipelineOutput,
    output_dir: &Path,
    levels: &[Level],
    format: FloatFormat,
) -> Result<(), PipelineError> {
    for &level in levels {
        let dir = level_dir(output_dir, level);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    for ((level, week), records) in &output.tables {
        let path = table_path(output_dir, *level, *week);
        let file = File::create(&path).map_err(io_err(&path))?;
        write_table(BufWriter::new(file), records, format).map_err(ingest_err(&path))?;
    }
    let path = output_dir.join(DIAGNOSTICS_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    output
        .diagnostics
        .write_csv(BufWriter::new(file))
        .map_err(|e| PipelineError::Io {
            path: path.clone(),
            source: std::io::Error::other(e),
        })?;
    let path = output_dir.join(COVERAGE_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    write_coverage(BufWriter::new(file), &output.coverage).map_err(ingest_err(&path))?;
    Ok(())
}

/// Loads `input_dir`, runs the pipeline and writes to `output_dir`.
pub fn compute(
    input_dir: &Path,
    output_dir: &Path,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let mut diags = Diagnostics::new();
    let inputs = load_inputs(input_dir, config.strictness, &mut diags)?;
    let mut output = run(&inputs, config)?;
    diags.extend(std::mem::take(&mut output.diagnostics));
    output.diagnostics = diags;
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    write_outputs(&output, output_dir, &config.levels, config.float_format)?;
    Ok(output)
}
