//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one `PASS` or `FAIL` line per criterion; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use stu_core::aggregate::apply_crosswalk;
use stu_core::dispersion::{gini_stu, shannon_entropy, GiniUnit};
use stu_core::ingest::{PanelObservation, PoiCatalog, YearMonth};
use stu_core::measures::{dedup_by_colocation, tract_category_time};
use stu_core::pipeline::{run, table_path, PipelineConfig, PipelineInputs};
use stu_core::seed::rng_for;
use stu_core::stats::{
    fit_distribution, morans_i, pearson_r, select_best_family, two_sample_ks, Family,
    SpatialWeights, StatsError,
};
use stu_core::synth::{
    compare_tables, generate, oracle_measures, relative_close, write_dataset, OracleInputs,
    SynthConfig, SynthDataset,
};
use stu_core::table::{read_table, StuRecord};
use stu_core::{ActivityCategory, Diagnostics, DwellPolicy, Level, Strictness};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn stu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stu"))
}

fn run_stu(args: &[&str]) -> Result<String, String> {
    let out = stu().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "stu {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn inputs_of(ds: &SynthDataset) -> PipelineInputs {
    PipelineInputs {
        catalog: PoiCatalog::new(ds.pois.clone()).unwrap(),
        patterns: ds.patterns.clone(),
        panel: ds.panel.clone(),
        category_map: ds.category_map.clone(),
        hierarchy: ds.hierarchy.clone(),
    }
}

fn read_tables(dir: &Path, weeks: &[chrono::NaiveDate]) -> Result<BTreeMap<(Level, chrono::NaiveDate), Vec<StuRecord>>, String> {
    let mut out = BTreeMap::new();
    for level in Level::ALL {
        for &week in weeks {
            let path = table_path(dir, level, week);
            if !path.exists() {
                continue;
            }
            let file = fs::File::open(&path).map_err(|e| e.to_string())?;
            let records = read_table(file).map_err(|e| format!("{}: {e}", path.display()))?;
            out.insert((level, week), records);
        }
    }
    Ok(out)
}

fn oracle_equivalence() -> Outcome {
    let config = SynthConfig {
        seed: 20230116,
        tracts: 50,
        pois: 500,
        weeks: 4,
        ..SynthConfig::default()
    };
    let ds = generate(&config).map_err(|e| e.to_string())?;
    let catalog = PoiCatalog::new(ds.pois.clone()).unwrap();
    let categories: BTreeSet<ActivityCategory> = ds
        .pois
        .iter()
        .filter_map(|p| ds.category_map.category(&p.naics))
        .collect();
    ensure!(categories.len() == 7, "only {} categories present", categories.len());
    ensure!(ds.hierarchy.tracts.len() == 50 && ds.pois.len() == 500, "instance size differs");

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    let output = tmp.path().join("out");
    write_dataset(&ds, &input).map_err(|e| e.to_string())?;
    let start = Instant::now();
    run_stu(&["compute", "--input", path_str(&input), "--output", path_str(&output), "--strict"])?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(elapsed < 10.0, "compute took {elapsed:.2}s");

    let weeks = config.week_starts();
    let actual = read_tables(&output, &weeks)?;
    let policy = DwellPolicy::default();
    let oracle = oracle_measures(&OracleInputs {
        ledger: &ds.ledger,
        weeks: &weeks,
        catalog: &catalog,
        category_map: &ds.category_map,
        panel: &ds.panel,
        hierarchy: &ds.hierarchy,
        policy: &policy,
    });
    let mismatches = compare_tables(&oracle.tables, &actual, 1e-9);
    ensure!(
        mismatches.is_empty(),
        "{} mismatches, first {:?}",
        mismatches.len(),
        mismatches.first()
    );
    let records: Vec<&StuRecord> = actual.values().flatten().collect();
    let ginis = records.iter().filter(|r| r.gini.is_some()).count();
    let diversities = records.iter().filter(|r| r.diversity.is_some()).count();
    ensure!(ginis > 0 && diversities > 0, "no Gini or diversity values compared");
    Ok(format!(
        "{} rows ({} with Gini) match the ledger oracle at 1e-9; compute {:.2}s",
        records.len(),
        ginis,
        elapsed
    ))
}

fn pairwise_gini(pop: &[f64], per_user: &[f64]) -> f64 {
    let total_pop: f64 = pop.iter().sum();
    let mean = pop.iter().zip(per_user).map(|(p, y)| p * y).sum::<f64>() / total_pop;
    let mut s = 0.0;
    for i in 0..pop.len() {
        for j in 0..pop.len() {
            s += pop[i] * pop[j] * (per_user[i] - per_user[j]).abs();
        }
    }
    s / (2.0 * total_pop * total_pop * mean)
}

fn units(pop: &[f64], per_user: &[f64]) -> Vec<GiniUnit> {
    pop.iter()
        .zip(per_user)
        .enumerate()
        .map(|(i, (&p, &y))| GiniUnit {
            geoid: format!("{i:011}"),
            population: p,
            per_user: y,
        })
        .collect()
}

fn gini_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for instance in 0..100u64 {
        let mut rng = rng_for(0x6121, &[instance]);
        let n = rng.random_range(2..=200);
        let pop: Vec<f64> = (0..n).map(|_| rng.random_range(100.0..5000.0)).collect();
        let per_user: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..900.0) })
            .collect();
        let g = gini_stu(&units(&pop, &per_user)).map_err(|e| e.to_string())?;
        let expected = pairwise_gini(&pop, &per_user);
        worst = worst.max((g - expected).abs());
        ensure!(
            (g - expected).abs() <= 1e-12,
            "instance {instance}: {g} vs pairwise {expected}"
        );
    }
    let equal = gini_stu(&units(&[10.0, 20.0, 30.0], &[5.0, 5.0, 5.0])).map_err(|e| e.to_string())?;
    ensure!(equal == 0.0, "equality gives {equal}");
    let concentrated =
        gini_stu(&units(&[1.0; 4], &[1.0, 0.0, 0.0, 0.0])).map_err(|e| e.to_string())?;
    ensure!(concentrated == 0.75, "one-of-four gives {concentrated}");
    Ok(format!("100 random instances within {worst:.1e}; G=0 and G=0.75 exact"))
}

fn shannon_correctness() -> Outcome {
    let h = |w: &[f64]| shannon_entropy(w.iter().copied()).map_err(|e| e.to_string());
    let single = h(&[42.0])?;
    ensure!(single.abs() <= 1e-12, "single sector {single}");
    let two = h(&[3.0, 3.0])?;
    ensure!((two - std::f64::consts::LN_2).abs() <= 1e-12, "two equal sectors {two}");
    let three = h(&[0.5, 0.25, 0.25])?;
    let closed = 1.5 * std::f64::consts::LN_2;
    ensure!((three - closed).abs() <= 1e-12, "(0.5,0.25,0.25) gives {three}");
    ensure!((three - 1.039721).abs() < 5e-7, "(0.5,0.25,0.25) gives {three}");
    let scaled = h(&[0.5e6, 0.25e6, 0.25e6])?;
    ensure!((scaled - three).abs() <= 1e-12, "rescaled gives {scaled}");
    Ok(format!("H(0.5,0.25,0.25) = {three:.12}; scale invariant"))
}

fn distribution_fit_recovery() -> Outcome {
    let dist = LogNormal::new(271.2f64.ln(), 0.6).unwrap();
    let draws = |seed: u64| -> Vec<f64> {
        let mut rng = rng_for(seed, &[]);
        (0..10_000).map(|_| dist.sample(&mut rng)).collect()
    };
    let sample = draws(2023);
    let fit = fit_distribution(&sample, Family::LogNormal).map_err(|e| e.to_string())?;
    let shape = fit.params.shape.unwrap_or(f64::NAN);
    let scale = fit.params.scale;
    ensure!((shape / 0.6 - 1.0).abs() <= 0.05, "shape {shape}");
    ensure!((scale / 271.2 - 1.0).abs() <= 0.05, "scale {scale}");
    let candidates = [Family::LogNormal, Family::Normal, Family::Exponential, Family::Gamma];
    for rep in 0..20u64 {
        let ranking = select_best_family(&draws(1000 + rep), &candidates);
        let best = ranking.best().map(|f| f.family);
        ensure!(best == Some(Family::LogNormal), "repetition {rep} ranks {best:?} first");
    }
    Ok(format!(
        "shape {shape:.4}, scale {scale:.2} (loc {:.3}); lognormal first in 20/20",
        fit.params.loc
    ))
}

fn urban_rural_separation() -> Outcome {
    let sample = |scale: f64, seed: u64| -> Vec<f64> {
        let dist = LogNormal::new(scale.ln(), 0.6).unwrap();
        let mut rng = rng_for(seed, &[]);
        (0..5000).map(|_| dist.sample(&mut rng)).collect()
    };
    let urban = sample(268.7, 1);
    let rural = sample(155.3, 2);
    let ks = two_sample_ks(&urban, &rural).map_err(|e| e.to_string())?;
    ensure!(ks.statistic > 0.15, "D = {}", ks.statistic);
    ensure!(ks.p_value < 0.001, "p = {}", ks.p_value);
    Ok(format!("D = {:.4}, p = {:.3e}", ks.statistic, ks.p_value))
}

fn grid_values(w: &SpatialWeights, f: impl Fn(usize, usize) -> f64, cols: usize) -> BTreeMap<String, f64> {
    w.ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), f(i / cols, i % cols)))
        .collect()
}

fn morans_i_checks() -> Outcome {
    let w2 = SpatialWeights::rook_grid(2, 2, true);
    let checker = grid_values(&w2, |r, c| ((r + c) % 2) as f64, 2);
    let i = morans_i(&checker, &w2, 99, 1).map_err(|e| e.to_string())?.statistic;
    ensure!((i + 1.0).abs() <= 1e-12, "checkerboard I = {i}");

    let w10 = SpatialWeights::rook_grid(10, 10, true);
    let constant = grid_values(&w10, |_, _| 3.0, 10);
    match morans_i(&constant, &w10, 99, 1) {
        Err(StatsError::ZeroVariance) => {}
        other => return Err(format!("constant field gave {other:?}")),
    }

    let gradient = grid_values(&w10, |r, c| (r + c) as f64, 10);
    let res = morans_i(&gradient, &w10, 999, 7).map_err(|e| e.to_string())?;
    ensure!(res.statistic > 0.5, "gradient I = {}", res.statistic);
    ensure!(res.p_value < 0.01, "gradient p = {}", res.p_value);

    let affine: BTreeMap<String, f64> = gradient.iter().map(|(k, v)| (k.clone(), 3.5 * v - 12.0)).collect();
    let shifted = morans_i(&affine, &w10, 999, 7).map_err(|e| e.to_string())?;
    ensure!(
        (shifted.statistic - res.statistic).abs() <= 1e-12,
        "affine image I = {} vs {}",
        shifted.statistic,
        res.statistic
    );
    Ok(format!(
        "checkerboard {i}; gradient I = {:.4}, p = {:.4}",
        res.statistic, res.p_value
    ))
}

fn pearson_ci_calibration() -> Outcome {
    let rho: f64 = 0.3;
    let mut covered = 0;
    for sim in 0..1000u64 {
        let mut rng = rng_for(0x7e57, &[sim]);
        let mut x = Vec::with_capacity(100);
        let mut y = Vec::with_capacity(100);
        for _ in 0..100 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            x.push(a);
            y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        let res = pearson_r(&x, &y).map_err(|e| e.to_string())?;
        if res.ci_low <= rho && rho <= res.ci_high {
            covered += 1;
        }
    }
    let rate = covered as f64 / 1000.0;
    ensure!(rate >= 0.93, "coverage {rate}");
    Ok(format!("95% interval covers r = 0.3 in {covered}/1000 simulations"))
}

/// Pools minutes, visits and devices over member tracts directly and checks
/// the aggregated tables against Σ T / Σ D and Σ T / Σ V.
fn pooled_check(ds: &SynthDataset) -> Result<usize, String> {
    let inputs = inputs_of(ds);
    let out = run(&inputs, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let devices: BTreeMap<(&str, YearMonth), u64> = ds
        .panel
        .iter()
        .map(|o: &PanelObservation| ((o.geoid.as_str(), o.month), o.device_count))
        .collect();
    let mut diags = Diagnostics::new();
    let deduped = dedup_by_colocation(inputs.patterns.clone(), &inputs.catalog, &mut diags);
    let table = tract_category_time(
        &deduped,
        &inputs.catalog,
        &inputs.category_map,
        &DwellPolicy::default(),
        Strictness::Lenient,
        &mut diags,
    )
    .map_err(|e| e.to_string())?;
    let mut checked = 0;
    for level in [Level::CountySubdivision, Level::County, Level::Metro] {
        let members = ds.hierarchy.members(level);
        for week in ds.config.week_starts() {
            let month = YearMonth::of(week);
            let rows = out.tables.get(&(level, week)).ok_or("missing aggregate table")?;
            for row in rows {
                let mut minutes = [0.0; 8];
                let mut minutes_with_devices = [0.0; 8];
                let mut visits = [0.0; 8];
                let mut device_total = 0.0;
                for tract in &members[&row.geoid] {
                    let d = devices.get(&(tract.as_str(), month)).copied().unwrap_or(0) as f64;
                    device_total += d;
                    let Some(acc) = table.get(week, tract) else { continue };
                    for k in 0..7 {
                        for slot in [0, k + 1] {
                            minutes[slot] += acc.minutes[k];
                            visits[slot] += acc.visits[k];
                            if d > 0.0 {
                                minutes_with_devices[slot] += acc.minutes[k];
                            }
                        }
                    }
                }
                let actual_user: Vec<Option<f64>> = row.per_user.iter().collect();
                let actual_visit: Vec<Option<f64>> = row.per_visit.iter().collect();
                for slot in 0..8 {
                    let per_user = (device_total > 0.0).then(|| minutes_with_devices[slot] / device_total);
                    let per_visit = (visits[slot] > 0.0).then(|| minutes[slot] / visits[slot]);
                    for (name, expected, actual) in [
                        ("per_user", per_user, actual_user[slot]),
                        ("per_visit", per_visit, actual_visit[slot]),
                    ] {
                        let ok = match (expected, actual) {
                            (Some(e), Some(a)) => relative_close(e, a, 1e-9),
                            (None, None) => true,
                            _ => false,
                        };
                        ensure!(
                            ok,
                            "{level} {} {week} {name}[{slot}]: pooled {expected:?} vs aggregated {actual:?}",
                            row.geoid
                        );
                        checked += 1;
                    }
                }
            }
        }
    }

    // Crosswalk apportionment of tract minutes.
    for week in ds.config.week_starts() {
        let mass: BTreeMap<String, f64> = table
            .cells
            .iter()
            .filter(|((w, _), _)| *w == week)
            .map(|((_, t), acc)| (t.clone(), acc.minutes.iter().sum()))
            .collect();
        let mut diags = Diagnostics::new();
        let res = apply_crosswalk(&mass, &ds.crosswalk, Strictness::Lenient, &mut diags)
            .map_err(|e| e.to_string())?;
        let unmapped: f64 = res.unmapped.iter().map(|g| mass[g]).sum();
        let total_in: f64 = mass.values().sum::<f64>() - unmapped;
        let total_out: f64 = res.values.values().sum();
        ensure!(
            relative_close(total_in, total_out, 1e-9),
            "crosswalk {week}: {total_in} in, {total_out} out"
        );
        checked += 1;
    }
    Ok(checked)
}

fn pooling_identities() -> Outcome {
    let configs = [
        SynthConfig::default(),
        SynthConfig {
            seed: 7,
            tracts: 30,
            tracts_per_county: 6,
            pois: 200,
            weeks: 3,
            colocation_rate: 0.4,
            unattributed_rate: 0.2,
            zero_device_tracts: 3,
            ..SynthConfig::default()
        },
        SynthConfig {
            seed: 99,
            tracts: 80,
            tracts_per_county: 4,
            pois: 300,
            weeks: 2,
            ..SynthConfig::default()
        },
    ];
    let mut checked = 0;
    for config in &configs {
        let ds = generate(config).map_err(|e| e.to_string())?;
        checked += pooled_check(&ds)?;
    }
    Ok(format!("{checked} aggregate and crosswalk identities on {} instances", configs.len()))
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn round_trip_and_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| tmp.path().join(name);
    run_stu(&["synth", "--seed", "11", "--output", path_str(&p("in_a"))])?;
    run_stu(&["synth", "--seed", "11", "--output", path_str(&p("in_b"))])?;
    ensure!(files_under(&p("in_a")) == files_under(&p("in_b")), "synth output differs between runs");
    run_stu(&["compute", "--input", path_str(&p("in_a")), "--output", path_str(&p("out_1")), "--threads", "1"])?;
    run_stu(&["compute", "--input", path_str(&p("in_b")), "--output", path_str(&p("out_4")), "--threads", "4"])?;
    let one = files_under(&p("out_1"));
    let four = files_under(&p("out_4"));
    ensure!(one == four, "outputs differ between 1 and 4 threads");

    let ds = generate(&SynthConfig { seed: 11, ..SynthConfig::default() }).map_err(|e| e.to_string())?;
    let out = run(&inputs_of(&ds), &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let parsed = read_tables(&p("out_1"), &ds.config.week_starts())?;
    ensure!(parsed == out.tables, "re-parsed tables differ from in-memory records");
    Ok(format!("{} files byte-identical across thread counts; {} tables re-parse exactly", one.len(), parsed.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("gini correctness", gini_correctness),
        ("shannon correctness", shannon_correctness),
        ("distribution-fit recovery", distribution_fit_recovery),
        ("urban/rural separation", urban_rural_separation),
        ("moran's i", morans_i_checks),
        ("pearson ci calibration", pearson_ci_calibration),
        ("pooling identities", pooling_identities),
        ("format round-trip and determinism", round_trip_and_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
