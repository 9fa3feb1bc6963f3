use std::fs;
use std::path::Path;

use stu_core::ingest::PoiCatalog;
use stu_core::pipeline::{run, PipelineConfig, PipelineInputs};
use stu_core::stats::{fit_distribution, Family};
use stu_core::synth::{generate, write_dataset, SynthConfig};
use stu_core::Level;

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_writes_identical_files() {
    let config = SynthConfig {
        tracts: 20,
        pois: 100,
        weeks: 2,
        corrupt_rows: 3,
        ..SynthConfig::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    write_dataset(&generate(&config).unwrap(), &a).unwrap();
    write_dataset(&generate(&config).unwrap(), &b).unwrap();
    let other = SynthConfig { seed: config.seed + 1, ..config.clone() };
    write_dataset(&generate(&other).unwrap(), &c).unwrap();
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
}

/// With one intensity scale for every tract and no weekly jitter, tract
/// per-user STU should follow the configured log-normal.
#[test]
fn tract_per_user_follows_the_configured_lognormal() {
    let scale = 271.2;
    let config = SynthConfig {
        seed: 5,
        tracts: 5000,
        tracts_per_county: 50,
        pois: 1400,
        weeks: 1,
        population_min: 400,
        population_max: 800,
        zero_device_tracts: 0,
        urban_scale: scale,
        rural_scale: scale,
        weekly_jitter: 0.0,
        ..SynthConfig::default()
    };
    let ds = generate(&config).unwrap();
    let inputs = PipelineInputs {
        catalog: PoiCatalog::new(ds.pois.clone()).unwrap(),
        patterns: ds.patterns,
        panel: ds.panel,
        category_map: ds.category_map,
        hierarchy: ds.hierarchy,
    };
    let out = run(
        &inputs,
        &PipelineConfig {
            levels: vec![Level::Tract],
            ..PipelineConfig::default()
        },
    )
    .unwrap();
    let per_user: Vec<f64> = out
        .tables
        .values()
        .flatten()
        .filter_map(|r| r.per_user.all)
        .collect();
    assert!(per_user.len() >= 4900, "{}", per_user.len());
    let fit = fit_distribution(&per_user, Family::LogNormal).unwrap();
    let shape = fit.params.shape.unwrap();
    let median = fit.params.loc + fit.params.scale;
    assert!((shape / config.intensity_shape - 1.0).abs() < 0.1, "shape {shape}");
    assert!((median / scale - 1.0).abs() < 0.05, "median {median} (loc {}, scale {})", fit.params.loc, fit.params.scale);
}
