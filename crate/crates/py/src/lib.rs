//! Python bindings for the `stu_core` pipeline and statistics.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use stu_core::aggregate::apply_crosswalk as core_apply_crosswalk;
use stu_core::dispersion::{gini_stu as core_gini, shannon_entropy, GiniUnit};
use stu_core::ingest::{Crosswalk, CrosswalkWeight, DwellHistogram, WeeklyPattern};
use stu_core::pipeline::{compute as core_compute, PipelineConfig};
use stu_core::stats::{self, Family, SpatialWeights};
use stu_core::synth::{generate, write_dataset, SynthConfig};
use stu_core::table::FloatFormat;
use stu_core::{Diagnostics, Level, Strictness};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn strictness(strict: bool) -> Strictness {
    if strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    }
}

/// Representative minutes per dwell bucket.
#[pyclass(frozen, from_py_object, name = "DwellPolicy")]
#[derive(Clone)]
struct PyDwellPolicy {
    inner: stu_core::DwellPolicy,
}

#[pymethods]
impl PyDwellPolicy {
    #[new]
    #[pyo3(signature = (open_bucket_minutes=None, minutes=None))]
    fn new(open_bucket_minutes: Option<f64>, minutes: Option<[f64; 7]>) -> PyResult<Self> {
        let mut m = match minutes {
            Some(m) => m,
            None => stu_core::DwellPolicy::default().minutes(),
        };
        if let Some(open) = open_bucket_minutes {
            m[6] = open;
        }
        let inner = stu_core::DwellPolicy::new(m).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn minutes(&self) -> [f64; 7] {
        self.inner.minutes()
    }

    fn __repr__(&self) -> String {
        format!("DwellPolicy(minutes={:?})", self.inner.minutes())
    }
}

/// A fitted distribution with its KS goodness of fit.
#[pyclass(frozen, name = "DistributionFit")]
struct PyDistributionFit {
    inner: stats::DistributionFit,
}

#[pymethods]
impl PyDistributionFit {
    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.name()
    }
    #[getter]
    fn shape(&self) -> Option<f64> {
        self.inner.params.shape
    }
    #[getter]
    fn loc(&self) -> f64 {
        self.inner.params.loc
    }
    #[getter]
    fn scale(&self) -> f64 {
        self.inner.params.scale
    }
    #[getter]
    fn ks_statistic(&self) -> f64 {
        self.inner.ks_statistic
    }
    #[getter]
    fn p_value(&self) -> f64 {
        self.inner.p_value
    }
    #[getter]
    fn sample_size(&self) -> usize {
        self.inner.sample_size
    }
    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner.params;
        format!(
            "DistributionFit(family='{}', shape={:?}, loc={}, scale={}, ks_statistic={}, p_value={})",
            self.inner.family.name(),
            p.shape,
            p.loc,
            p.scale,
            self.inner.ks_statistic,
            self.inner.p_value
        )
    }
}

/// Tract GEOID (first 11 digits) of a 12-digit block group GEOID.
#[pyfunction]
fn cbg_to_tract(cbg: &str) -> PyResult<String> {
    stu_core::ingest::cbg_to_tract(cbg).map_err(value_error)
}

/// Total minutes of one POI-week from its seven dwell-bucket counts.
#[pyfunction]
#[pyo3(signature = (buckets, policy=None))]
fn expected_poi_dwell_total(buckets: [f64; 7], policy: Option<PyDwellPolicy>) -> PyResult<f64> {
    if buckets.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(value_error("bucket counts must be finite and non-negative"));
    }
    let policy = policy.map(|p| p.inner).unwrap_or_default();
    let pattern = WeeklyPattern {
        poi_id: String::new(),
        week_start: chrono::NaiveDate::default(),
        raw_visits: buckets.iter().sum(),
        dwell_buckets: DwellHistogram(buckets),
        home_areas: BTreeMap::new(),
    };
    Ok(stu_core::measures::expected_poi_dwell_total(&pattern, &policy))
}

/// Shannon entropy (natural log) of sector minutes, given as a list or as a
/// `{naics: minutes}` dict.
#[pyfunction]
fn shannon_diversity(minutes: &Bound<'_, PyAny>) -> PyResult<f64> {
    let weights: Vec<f64> = match minutes.cast::<PyDict>() {
        Ok(d) => d.values().extract()?,
        Err(_) => minutes.extract()?,
    };
    shannon_entropy(weights).map_err(value_error)
}

/// Population-weighted Gini of per-user STU across units.
#[pyfunction]
fn gini_stu(population: Vec<f64>, per_user: Vec<f64>) -> PyResult<f64> {
    if population.len() != per_user.len() {
        return Err(value_error("population and per_user differ in length"));
    }
    let units: Vec<GiniUnit> = population
        .into_iter()
        .zip(per_user)
        .enumerate()
        .map(|(i, (population, per_user))| GiniUnit {
            geoid: i.to_string(),
            population,
            per_user,
        })
        .collect();
    core_gini(&units).map_err(value_error)
}

#[pyfunction]
fn fit_distribution(samples: Vec<f64>, family: &str) -> PyResult<PyDistributionFit> {
    let family: Family = family.parse().map_err(value_error)?;
    let inner = stats::fit_distribution(&samples, family).map_err(value_error)?;
    Ok(PyDistributionFit { inner })
}

/// Fits every requested family (all seven by default) and returns the fits
/// ordered by KS statistic, best first. Families that cannot be fitted are
/// left out.
#[pyfunction]
#[pyo3(signature = (samples, families=None))]
fn select_best_family(samples: Vec<f64>, families: Option<Vec<String>>) -> PyResult<Vec<PyDistributionFit>> {
    let families: Vec<Family> = match families {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<Family>())
            .collect::<Result<_, _>>()
            .map_err(value_error)?,
        None => Family::ALL.to_vec(),
    };
    let ranking = stats::select_best_family(&samples, &families);
    Ok(ranking
        .ranked
        .into_iter()
        .map(|inner| PyDistributionFit { inner })
        .collect())
}

/// Two-sample KS test, returning `(statistic, p_value)`.
#[pyfunction]
fn two_sample_ks(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = stats::two_sample_ks(&a, &b).map_err(value_error)?;
    Ok((r.statistic, r.p_value))
}

/// Global Moran's I. Pass either neighbour `edges` between the keys of
/// `values`, or `grid=(rows, cols)` with `values` as a row-major list.
#[pyfunction]
#[pyo3(signature = (values, seed, edges=None, grid=None, permutations=999, row_standardize=true))]
fn morans_i<'py>(
    py: Python<'py>,
    values: &Bound<'py, PyAny>,
    seed: u64,
    edges: Option<Vec<(String, String)>>,
    grid: Option<(usize, usize)>,
    permutations: usize,
    row_standardize: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (weights, map) = match (edges, grid) {
        (Some(edges), None) => {
            let w = SpatialWeights::from_edges(&edges, row_standardize).map_err(value_error)?;
            let map: BTreeMap<String, f64> = values.extract()?;
            (w, map)
        }
        (None, Some((rows, cols))) => {
            let w = SpatialWeights::rook_grid(rows, cols, row_standardize);
            let list: Vec<f64> = values.extract()?;
            if list.len() != rows * cols {
                return Err(value_error(format!("grid needs {} values, got {}", rows * cols, list.len())));
            }
            let map = w.ids().iter().cloned().zip(list).collect();
            (w, map)
        }
        _ => return Err(value_error("pass exactly one of edges or grid")),
    };
    let r = py
        .detach(|| stats::morans_i(&map, &weights, permutations, seed))
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("statistic", r.statistic)?;
    d.set_item("expected", r.expected)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("permutations", r.permutations)?;
    d.set_item("n", r.n)?;
    Ok(d)
}

/// Pearson r with its t-test p-value and 95% Fisher-z interval.
#[pyfunction]
fn pearson_r<'py>(py: Python<'py>, x: Vec<f64>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = stats::pearson_r(&x, &y).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("r", r.r)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("ci_low", r.ci_low)?;
    d.set_item("ci_high", r.ci_high)?;
    d.set_item("n", r.n)?;
    Ok(d)
}

/// Apportions additive values through `(source, target, weight)` rows.
/// Returns the target values and the sources that had no crosswalk entry.
#[pyfunction]
#[pyo3(signature = (values, crosswalk, strict=false))]
fn apply_crosswalk(
    values: BTreeMap<String, f64>,
    crosswalk: Vec<(String, String, f64)>,
    strict: bool,
) -> PyResult<(BTreeMap<String, f64>, Vec<String>)> {
    let weights = crosswalk
        .into_iter()
        .map(|(source_geoid, target_geoid, weight)| CrosswalkWeight {
            source_geoid,
            target_geoid,
            weight,
        })
        .collect();
    let cw = Crosswalk::new(weights).map_err(value_error)?;
    let mut diags = Diagnostics::new();
    let r = core_apply_crosswalk(&values, &cw, strictness(strict), &mut diags).map_err(value_error)?;
    Ok((r.values, r.unmapped))
}

/// Runs the pipeline over `input_dir` and writes tables under `output_dir`.
/// Returns a summary with per-level row counts and diagnostics.
#[pyfunction]
#[pyo3(signature = (input_dir, output_dir, strict=false, open_bucket_minutes=None, levels=None, float_digits=None))]
fn compute<'py>(
    py: Python<'py>,
    input_dir: PathBuf,
    output_dir: PathBuf,
    strict: bool,
    open_bucket_minutes: Option<f64>,
    levels: Option<Vec<String>>,
    float_digits: Option<u32>,
) -> PyResult<Bound<'py, PyDict>> {
    let policy = match open_bucket_minutes {
        Some(m) => stu_core::DwellPolicy::with_open_bucket(m).map_err(value_error)?,
        None => stu_core::DwellPolicy::default(),
    };
    let levels: Vec<Level> = match levels {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<Level>())
            .collect::<Result<_, _>>()
            .map_err(value_error)?,
        None => Level::ALL.to_vec(),
    };
    let config = PipelineConfig {
        policy,
        strictness: strictness(strict),
        levels,
        float_format: float_digits.map_or(FloatFormat::RoundTrip, FloatFormat::Significant),
    };
    let out = py
        .detach(|| core_compute(&input_dir, &output_dir, &config))
        .map_err(value_error)?;
    let rows = PyDict::new(py);
    for level in &config.levels {
        let n: usize = out
            .tables
            .iter()
            .filter(|((l, _), _)| l == level)
            .map(|(_, t)| t.len())
            .sum();
        rows.set_item(level.name(), n)?;
    }
    let diags = PyList::empty(py);
    for d in out.diagnostics.events() {
        diags.append((d.kind.as_str(), &d.key, &d.detail))?;
    }
    let weeks: std::collections::BTreeSet<String> =
        out.tables.keys().map(|(_, w)| w.to_string()).collect();
    let summary = PyDict::new(py);
    summary.set_item("weeks", weeks.into_iter().collect::<Vec<_>>())?;
    summary.set_item("rows", rows)?;
    summary.set_item("diagnostics", diags)?;
    Ok(summary)
}

/// Writes a synthetic input directory with its visit ledger. `config` is
/// TOML text; omitted keys take their defaults.
#[pyfunction]
#[pyo3(signature = (output_dir, seed, config=None))]
fn synth<'py>(
    py: Python<'py>,
    output_dir: PathBuf,
    seed: u64,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match config {
        Some(text) => SynthConfig::from_toml(text).map_err(value_error)?,
        None => SynthConfig::default(),
    };
    cfg.seed = seed;
    let (ds, corrupted) = py
        .detach(|| {
            let ds = generate(&cfg)?;
            let corrupted = write_dataset(&ds, &output_dir)?;
            Ok::<_, stu_core::synth::SynthError>((ds, corrupted))
        })
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("tracts", ds.hierarchy.tracts.len())?;
    d.set_item("pois", ds.pois.len())?;
    d.set_item("pattern_rows", ds.patterns.len())?;
    d.set_item("ledger_visits", ds.ledger.len())?;
    d.set_item(
        "corrupted_rows",
        corrupted.iter().map(|c| (c.row, c.kind)).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

#[pymodule]
fn stu_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDwellPolicy>()?;
    m.add_class::<PyDistributionFit>()?;
    m.add_function(wrap_pyfunction!(cbg_to_tract, m)?)?;
    m.add_function(wrap_pyfunction!(expected_poi_dwell_total, m)?)?;
    m.add_function(wrap_pyfunction!(shannon_diversity, m)?)?;
    m.add_function(wrap_pyfunction!(gini_stu, m)?)?;
    m.add_function(wrap_pyfunction!(fit_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(select_best_family, m)?)?;
    m.add_function(wrap_pyfunction!(two_sample_ks, m)?)?;
    m.add_function(wrap_pyfunction!(morans_i, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(apply_crosswalk, m)?)?;
    m.add_function(wrap_pyfunction!(compute, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
