//! `stu`: compute social-infrastructure time use tables from weekly POI
//! patterns and run the validation statistics.
//!
//! Reports go to stdout as `key=value` lines; lines starting with `# ` are a
//! human-readable summary.

mod compute;
mod report;
mod stats_cmds;
mod synth_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "stu", version, about = "Social-infrastructure time use from POI foot traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over an input directory and write weekly tables.
    Compute(compute::ComputeArgs),
    /// Apportion additive columns of a CSV from source to target GEOIDs.
    Aggregate(compute::AggregateArgs),
    /// Fit candidate distributions and rank them by KS statistic.
    Fit(stats_cmds::FitArgs),
    /// Global Moran's I with a permutation p-value.
    Moran(stats_cmds::MoranArgs),
    /// Two-sample Kolmogorov-Smirnov test.
    Ks2(stats_cmds::Ks2Args),
    /// Pearson correlation with a 95% confidence interval.
    Correlate(stats_cmds::CorrelateArgs),
    /// Generate a synthetic input directory with a visit ledger.
    Synth(synth_cmd::SynthArgs),
    /// Strictly parse an input directory and, when it has a visit ledger,
    /// compare pipeline output against the ledger oracle.
    Validate(synth_cmd::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compute(a) => compute::run_compute(a),
        Command::Aggregate(a) => compute::run_aggregate(a),
        Command::Fit(a) => stats_cmds::run_fit(a),
        Command::Moran(a) => stats_cmds::run_moran(a),
        Command::Ks2(a) => stats_cmds::run_ks2(a),
        Command::Correlate(a) => stats_cmds::run_correlate(a),
        Command::Synth(a) => synth_cmd::run_synth(a),
        Command::Validate(a) => synth_cmd::run_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub(crate) fn set_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

pub(crate) fn open(path: &PathBuf) -> anyhow::Result<std::io::BufReader<std::fs::File>> {
    use anyhow::Context;
    let f = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(std::io::BufReader::new(f))
}
