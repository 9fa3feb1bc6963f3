use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use serde::Deserialize;
use stu_core::aggregate::apply_crosswalk;
use stu_core::ingest::load_crosswalk;
use stu_core::pipeline::{compute, PipelineConfig};
use stu_core::stats::pearson_r;
use stu_core::table::FloatFormat;
use stu_core::{DiagnosticKind, Diagnostics, DwellPolicy, Level, Strictness};

use crate::report::{num, Report};

#[derive(Args)]
pub struct ComputeArgs {
    /// Directory holding pois.csv, patterns.csv, panel.csv, categories.csv
    /// and hierarchy.csv.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; tables go to <level>/<yyyy-mm-dd>.csv.
    #[arg(long)]
    output: PathBuf,
    /// Abort on the first malformed row or missing panel month.
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Skip malformed rows and record them in diagnostics.csv (default).
    #[arg(long)]
    lenient: bool,
    /// Representative minutes for the open-ended >240 bucket.
    #[arg(long)]
    open_bucket_minutes: Option<f64>,
    /// All seven representative minutes, comma separated.
    #[arg(long)]
    dwell_minutes: Option<String>,
    /// Levels to emit, comma separated (tract, county_subdivision, county, metro).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<String>>,
    #[arg(long)]
    threads: Option<usize>,
    /// Round output floats to this many significant digits instead of
    /// writing the shortest exact representation.
    #[arg(long)]
    float_digits: Option<u32>,
    /// TOML file with defaults for the options above; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Keys accepted in a `compute --config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeConfig {
    strictness: Option<String>,
    open_bucket_minutes: Option<f64>,
    dwell_minutes: Option<Vec<f64>>,
    levels: Option<Vec<String>>,
    threads: Option<usize>,
    float_digits: Option<u32>,
}

fn parse_levels(names: &[String]) -> anyhow::Result<Vec<Level>> {
    let mut levels = Vec::new();
    for n in names {
        let l: Level = n.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        if !levels.contains(&l) {
            levels.push(l);
        }
    }
    Ok(levels)
}

fn build_config(args: &ComputeArgs) -> anyhow::Result<(PipelineConfig, Option<usize>)> {
    let file: ComputeConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
        }
        None => ComputeConfig::default(),
    };
    let strictness = if args.strict {
        Strictness::Strict
    } else if args.lenient {
        Strictness::Lenient
    } else {
        match file.strictness.as_deref() {
            None | Some("lenient") => Strictness::Lenient,
            Some("strict") => Strictness::Strict,
            Some(other) => bail!("strictness must be 'strict' or 'lenient', not '{other}'"),
        }
    };
    let mut minutes = DwellPolicy::default().minutes();
    if let Some(list) = &file.dwell_minutes {
        if list.len() != 7 {
            bail!("dwell_minutes needs 7 values, got {}", list.len());
        }
        minutes.copy_from_slice(list);
    }
    if let Some(text) = &args.dwell_minutes {
        minutes = DwellPolicy::parse_list(text)?.minutes();
    }
    if let Some(open) = args.open_bucket_minutes.or(file.open_bucket_minutes) {
        minutes[6] = open;
    }
    let policy = DwellPolicy::new(minutes)?;
    let levels = match args.levels.as_ref().or(file.levels.as_ref()) {
        Some(names) => parse_levels(names)?,
        None => Level::ALL.to_vec(),
    };
    let float_format = match args.float_digits.or(file.float_digits) {
        Some(0) => bail!("float digits must be positive"),
        Some(d) => FloatFormat::Significant(d),
        None => FloatFormat::RoundTrip,
    };
    Ok((
        PipelineConfig {
            policy,
            strictness,
            levels,
            float_format,
        },
        args.threads.or(file.threads),
    ))
}

pub fn run_compute(args: ComputeArgs) -> anyhow::Result<ExitCode> {
    let (config, threads) = build_config(&args)?;
    crate::set_threads(threads)?;
    let output = compute(&args.input, &args.output, &config)?;

    let mut r = Report::default();
    let weeks: std::collections::BTreeSet<_> = output.tables.keys().map(|(_, w)| *w).collect();
    r.kv("weeks", weeks.len());
    for level in &config.levels {
        let rows: usize = output
            .tables
            .iter()
            .filter(|((l, _), _)| l == level)
            .map(|(_, t)| t.len())
            .sum();
        r.kv(&format!("rows.{level}"), rows);
    }
    r.kv("diagnostics", output.diagnostics.len());
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for d in output.diagnostics.events() {
        *kinds.entry(d.kind.as_str()).or_default() += 1;
    }
    for (k, n) in &kinds {
        r.kv(&format!("diagnostics.{k}"), n);
    }
    let (devices, population): (Vec<f64>, Vec<f64>) = output
        .coverage
        .iter()
        .filter(|c| c.level == "tract")
        .filter_map(|c| Some((c.device_count as f64, c.population? as f64)))
        .unzip();
    if let Ok(p) = pearson_r(&devices, &population) {
        r.kv("panel_population_r", p.r)
            .kv("panel_population_p", num(p.p_value))
            .kv("panel_population_ci_low", p.ci_low)
            .kv("panel_population_ci_high", p.ci_high);
    }
    r.note(format!(
        "wrote {} tables for {} week(s) to {}",
        output.tables.len(),
        weeks.len(),
        args.output.display()
    ));
    if output.diagnostics.count(DiagnosticKind::SkippedRow) > 0 {
        r.note(format!(
            "{} malformed input rows skipped; see diagnostics.csv",
            output.diagnostics.count(DiagnosticKind::SkippedRow)
        ));
    }
    r.print();
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct AggregateArgs {
    /// CSV with a GEOID column and additive numeric columns.
    #[arg(long)]
    input: PathBuf,
    /// Crosswalk CSV (source_geoid, target_geoid, weight).
    #[arg(long)]
    crosswalk: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "GEOID")]
    geoid_column: String,
    /// Columns to apportion; defaults to every column except the GEOID and
    /// Timestamp columns.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Fail when a source GEOID has no crosswalk entry.
    #[arg(long)]
    strict: bool,
}

pub fn run_aggregate(args: AggregateArgs) -> anyhow::Result<ExitCode> {
    let crosswalk = load_crosswalk(crate::open(&args.crosswalk)?)
        .with_context(|| format!("{}", args.crosswalk.display()))?;
    let mut rdr = csv::Reader::from_reader(crate::open(&args.input)?);
    let headers = rdr.headers()?.clone();
    let geoid_idx = headers
        .iter()
        .position(|h| h == args.geoid_column)
        .with_context(|| format!("missing column '{}'", args.geoid_column))?;
    let columns: Vec<String> = match &args.columns {
        Some(c) => c.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, h)| *i != geoid_idx && *h != "Timestamp")
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let indices: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c)
                .with_context(|| format!("missing column '{c}'"))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut values: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); columns.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let geoid = rec.get(geoid_idx).unwrap_or("").trim().to_string();
        for (slot, &i) in values.iter_mut().zip(&indices) {
            let text = rec.get(i).unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let v: f64 = text
                .parse()
                .with_context(|| format!("row {}: '{text}' is not a number", row + 1))?;
            *slot.entry(geoid.clone()).or_default() += v;
        }
    }
    let strictness = if args.strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    };
    let mut diags = Diagnostics::new();
    let mut out: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut unmapped_sources = std::collections::BTreeSet::new();
    let mut r = Report::default();
    for (c, (name, vals)) in columns.iter().zip(&values).enumerate() {
        let result = apply_crosswalk(vals, &crosswalk, strictness, &mut diags)?;
        let total_in: f64 = vals.values().sum();
        let unmapped: f64 = result.unmapped.iter().map(|g| vals[g]).sum();
        let total_out: f64 = result.values.values().sum();
        unmapped_sources.extend(result.unmapped.iter().cloned());
        for (g, v) in result.values {
            out.entry(g).or_insert_with(|| vec![None; columns.len()])[c] = Some(v);
        }
        r.kv(&format!("{name}.total_in"), total_in)
            .kv(&format!("{name}.total_out"), total_out)
            .kv(&format!("{name}.unmapped_total"), unmapped);
    }
    let mut w = csv::Writer::from_path(&args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    let mut header = vec![args.geoid_column.clone()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (g, vals) in &out {
        let mut row = vec![g.clone()];
        row.extend(vals.iter().map(|v| v.map(|x| format!("{x}")).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    r.kv("targets", out.len())
        .kv("unmapped_sources", unmapped_sources.len());
    r.note(format!("apportioned {} column(s) to {} target GEOIDs", columns.len(), out.len()));
    r.print();
    Ok(ExitCode::SUCCESS)
}
