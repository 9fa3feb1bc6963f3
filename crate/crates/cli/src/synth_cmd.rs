use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use stu_core::pipeline::{load_inputs, run, write_outputs, PipelineConfig};
use stu_core::synth::{
    compare_tables, generate, oracle_measures, read_ledger, write_dataset, OracleInputs,
    SynthConfig, CONFIG_FILE, LEDGER_FILE,
};
use stu_core::{Diagnostics, DwellPolicy, Strictness};

use crate::report::Report;

#[derive(Args)]
pub struct SynthArgs {
    /// TOML generator config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Root seed; overrides any seed in the config.
    #[arg(long)]
    seed: u64,
}

pub fn run_synth(args: SynthArgs) -> anyhow::Result<ExitCode> {
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            SynthConfig::from_toml(&text)?
        }
        None => SynthConfig::default(),
    };
    config.seed = args.seed;
    config.validate()?;
    let ds = generate(&config)?;
    let corrupted = write_dataset(&ds, &args.output)?;
    let mut r = Report::default();
    r.kv("seed", config.seed)
        .kv("tracts", config.tracts)
        .kv("pois", ds.pois.len())
        .kv("weeks", config.weeks)
        .kv("pattern_rows", ds.patterns.len())
        .kv("ledger_visits", ds.ledger.len())
        .kv("corrupted_rows", corrupted.len());
    for c in &corrupted {
        r.kv(&format!("corrupted.row{}", c.row), c.kind);
    }
    r.note(format!("wrote synthetic inputs to {}", args.output.display()));
    r.print();
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Input directory, typically produced by `stu synth`.
    #[arg(long)]
    input: PathBuf,
    /// Also write the pipeline tables here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Relative tolerance for pipeline vs ledger comparison.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Skip malformed rows instead of failing on them.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    open_bucket_minutes: Option<f64>,
}

pub fn run_validate(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let strictness = if args.lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    let policy = match args.open_bucket_minutes {
        Some(m) => DwellPolicy::with_open_bucket(m)?,
        None => DwellPolicy::default(),
    };
    let mut diags = Diagnostics::new();
    let inputs = load_inputs(&args.input, strictness, &mut diags)?;
    let config = PipelineConfig {
        policy,
        strictness,
        ..PipelineConfig::default()
    };
    let mut output = run(&inputs, &config)?;
    diags.extend(std::mem::take(&mut output.diagnostics));
    output.diagnostics = diags;
    if let Some(dir) = &args.output {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_outputs(&output, dir, &config.levels, config.float_format)?;
    }

    let mut r = Report::default();
    r.kv("poi_rows", inputs.catalog.len())
        .kv("pattern_rows", inputs.patterns.len())
        .kv("panel_rows", inputs.panel.len())
        .kv("diagnostics", output.diagnostics.len());

    let ledger_path = args.input.join(LEDGER_FILE);
    if !ledger_path.exists() {
        r.note("inputs parse cleanly; no ledger.csv, so no oracle comparison");
        r.print();
        return Ok(ExitCode::SUCCESS);
    }
    let ledger = read_ledger(crate::open(&ledger_path)?)
        .with_context(|| format!("{}", ledger_path.display()))?;
    let config_path = args.input.join(CONFIG_FILE);
    let weeks: Vec<_> = if config_path.exists() {
        let text = std::fs::read_to_string(&config_path)?;
        SynthConfig::from_toml(&text)?.week_starts()
    } else {
        let set: BTreeSet<_> = inputs.patterns.iter().map(|p| p.week_start).collect();
        set.into_iter().collect()
    };
    let oracle = oracle_measures(&OracleInputs {
        ledger: &ledger,
        weeks: &weeks,
        catalog: &inputs.catalog,
        category_map: &inputs.category_map,
        panel: &inputs.panel,
        hierarchy: &inputs.hierarchy,
        policy: &config.policy,
    });
    let mismatches = compare_tables(&oracle.tables, &output.tables, args.tolerance);
    let loss = oracle.dwell_loss;
    let cells: usize = oracle.tables.values().map(|t| t.len()).sum();
    r.kv("ledger_visits", ledger.len())
        .kv("oracle_rows", cells)
        .kv("exact_minutes", loss.exact_minutes)
        .kv("bucketed_minutes", loss.bucketed_minutes)
        .kv(
            "bucketing_relative_error",
            (loss.bucketed_minutes - loss.exact_minutes) / loss.exact_minutes,
        )
        .kv("mismatches", mismatches.len());
    for m in mismatches.iter().take(20) {
        r.kv(
            "mismatch",
            format!(
                "{} {} {} {} expected={:?} actual={:?}",
                m.level, m.week, m.geoid, m.column, m.expected, m.actual
            ),
        );
    }
    if mismatches.is_empty() {
        r.note(format!("pipeline matches the ledger oracle within {}", args.tolerance));
    } else {
        r.note(format!("{} cells differ from the ledger oracle", mismatches.len()));
    }
    r.print();
    Ok(if mismatches.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
