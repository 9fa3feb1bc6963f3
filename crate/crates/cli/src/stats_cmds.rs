use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use stu_core::ingest::{read_edges, read_pairs, read_values, LabeledValue};
use stu_core::stats::{
    morans_i, pearson_r, select_best_family, two_sample_ks, Family, SpatialWeights,
};

use crate::report::{num, Report};

fn load_values(path: &PathBuf, column: &str) -> anyhow::Result<Vec<LabeledValue>> {
    read_values(crate::open(path)?, column).with_context(|| format!("{}", path.display()))
}

fn params_text(shape: Option<f64>, loc: f64, scale: f64) -> String {
    match shape {
        Some(s) => format!("shape={s} loc={loc} scale={scale}"),
        None => format!("loc={loc} scale={scale}"),
    }
}

#[derive(Args)]
pub struct FitArgs {
    /// CSV holding the sample.
    #[arg(long)]
    values: PathBuf,
    #[arg(long, default_value = "value")]
    column: String,
    /// Candidate families, comma separated; defaults to all seven.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
}

pub fn run_fit(args: FitArgs) -> anyhow::Result<ExitCode> {
    let samples: Vec<f64> = load_values(&args.values, &args.column)?
        .into_iter()
        .map(|v| v.value)
        .collect();
    let families: Vec<Family> = match &args.families {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<Family>())
            .collect::<Result<_, _>>()?,
        None => Family::ALL.to_vec(),
    };
    let ranking = select_best_family(&samples, &families);
    let mut r = Report::default();
    r.kv("n", samples.len());
    match ranking.best() {
        Some(best) => r.kv("best", best.family.name()),
        None => r.kv("best", ""),
    };
    for (rank, f) in ranking.ranked.iter().enumerate() {
        r.kv(
            &format!("rank{}", rank + 1),
            format!(
                "{} ks={} p={} loglik={} {}",
                f.family.name(),
                f.ks_statistic,
                num(f.p_value),
                f.log_likelihood,
                params_text(f.params.shape, f.params.loc, f.params.scale)
            ),
        );
    }
    for (family, err) in &ranking.unfit {
        r.kv(&format!("unfit.{}", family.name()), err);
    }
    r.print();
    if ranking.ranked.is_empty() {
        bail!("no family could be fitted");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct MoranArgs {
    /// CSV with a geoid column and a value column.
    #[arg(long)]
    values: PathBuf,
    #[arg(long, default_value = "value")]
    column: String,
    /// Neighbour pairs (geoid_a, geoid_b).
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    edges: Option<PathBuf>,
    /// Rook lattice `ROWSxCOLS`; values without ids are placed row-major.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = stu_core::stats::moran::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long)]
    seed: u64,
    /// Use binary weights instead of row-standardised ones.
    #[arg(long)]
    no_row_standardize: bool,
}

fn parse_grid(text: &str) -> anyhow::Result<(usize, usize)> {
    let (r, c) = text
        .split_once(['x', 'X'])
        .with_context(|| format!("grid must look like 10x10, got '{text}'"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

pub fn run_moran(args: MoranArgs) -> anyhow::Result<ExitCode> {
    let raw = load_values(&args.values, &args.column)?;
    let row_standardize = !args.no_row_standardize;
    let (weights, values) = match (&args.edges, &args.grid) {
        (Some(path), _) => {
            let edges = read_edges(crate::open(path)?).with_context(|| format!("{}", path.display()))?;
            let w = SpatialWeights::from_edges(&edges, row_standardize)?;
            let mut values = BTreeMap::new();
            for v in raw {
                let id = v.id.context("values need a geoid column when --edges is used")?;
                values.insert(id, v.value);
            }
            (w, values)
        }
        (None, Some(grid)) => {
            let (rows, cols) = parse_grid(grid)?;
            let w = SpatialWeights::rook_grid(rows, cols, row_standardize);
            let values: BTreeMap<String, f64> = if raw.iter().all(|v| v.id.is_none()) {
                if raw.len() != rows * cols {
                    bail!("grid {rows}x{cols} needs {} values, got {}", rows * cols, raw.len());
                }
                w.ids().iter().cloned().zip(raw.iter().map(|v| v.value)).collect()
            } else {
                raw.into_iter()
                    .map(|v| Ok((v.id.context("mixed rows with and without ids")?, v.value)))
                    .collect::<anyhow::Result<_>>()?
            };
            (w, values)
        }
        (None, None) => bail!("either --edges or --grid is required"),
    };
    let res = morans_i(&values, &weights, args.permutations, args.seed)?;
    let mut r = Report::default();
    r.kv("n", res.n)
        .kv("moran_i", res.statistic)
        .kv("expected", res.expected)
        .kv("p_value", num(res.p_value))
        .kv("permutations", res.permutations)
        .kv("seed", args.seed)
        .kv("row_standardized", weights.is_row_standardized());
    r.print();
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct Ks2Args {
    /// First sample.
    #[arg(long, requires = "b", conflicts_with = "labels")]
    a: Option<PathBuf>,
    /// Second sample.
    #[arg(long)]
    b: Option<PathBuf>,
    /// Single CSV holding both samples, split by --labels.
    #[arg(long, conflicts_with = "a", requires = "labels")]
    values: Option<PathBuf>,
    /// CSV (geoid, label) assigning each value to one of two groups.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "value")]
    column: String,
    #[arg(long, default_value = "label")]
    label_column: String,
}

fn read_labels(path: &PathBuf, column: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_reader(crate::open(path)?);
    let headers = rdr.headers()?.clone();
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let id = find(&["geoid", "GEOID", "id"]).context("labels need a geoid column")?;
    let label = find(&[column]).with_context(|| format!("labels need a '{column}' column"))?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.insert(rec[id].trim().to_string(), rec[label].trim().to_string());
    }
    Ok(out)
}

pub fn run_ks2(args: Ks2Args) -> anyhow::Result<ExitCode> {
    let (names, a, b) = match (&args.a, &args.b, &args.values, &args.labels) {
        (Some(pa), Some(pb), _, _) => {
            let a: Vec<f64> = load_values(pa, &args.column)?.into_iter().map(|v| v.value).collect();
            let b: Vec<f64> = load_values(pb, &args.column)?.into_iter().map(|v| v.value).collect();
            (("a".to_string(), "b".to_string()), a, b)
        }
        (_, _, Some(pv), Some(pl)) => {
            let labels = read_labels(pl, &args.label_column)?;
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for v in load_values(pv, &args.column)? {
                let id = v.id.context("values need a geoid column when --labels is used")?;
                if let Some(l) = labels.get(&id) {
                    groups.entry(l.clone()).or_default().push(v.value);
                }
            }
            if groups.len() != 2 {
                bail!("labels must define exactly two groups, found {}", groups.len());
            }
            let mut it = groups.into_iter();
            let (na, a) = it.next().unwrap();
            let (nb, b) = it.next().unwrap();
            ((na, nb), a, b)
        }
        _ => bail!("use --a and --b, or --values with --labels"),
    };
    let res = two_sample_ks(&a, &b)?;
    let mut r = Report::default();
    r.kv("group_a", &names.0)
        .kv("n_a", a.len())
        .kv("group_b", &names.1)
        .kv("n_b", b.len())
        .kv("ks_statistic", res.statistic)
        .kv("p_value", num(res.p_value));
    r.print();
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    x_column: String,
    #[arg(long)]
    y_column: String,
}

pub fn run_correlate(args: CorrelateArgs) -> anyhow::Result<ExitCode> {
    let (x, y) = read_pairs(crate::open(&args.input)?, &args.x_column, &args.y_column)
        .with_context(|| format!("{}", args.input.display()))?;
    let res = pearson_r(&x, &y)?;
    let mut r = Report::default();
    r.kv("n", res.n)
        .kv("r", res.r)
        .kv("p_value", num(res.p_value))
        .kv("ci_low", res.ci_low)
        .kv("ci_high", res.ci_high)
        .kv("confidence", res.confidence);
    r.print();
    Ok(ExitCode::SUCCESS)
}
