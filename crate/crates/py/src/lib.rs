//! Python module `subtypes`.
//!
//! Feature rows are lists of six floats in the order temperature, sbp,
//! heart_rate, sats, resp_rate, consciousness. Structured results come back
//! as plain dicts (via JSON) so they need no extra classes on the Python side.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use subtype_core::explain;
use subtype_core::hdbscan::{self, ClusterLabels};
use subtype_core::metrics;
use subtype_core::pipeline::{self, Stage};
use subtype_core::preprocess::{FeatureMatrix, N_FEATURES};
use subtype_core::report;
use subtype_core::synth;
use subtype_core::umap::{self, Embedding2D};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let json = py.import("json")?;
    json.call_method1("loads", (v.to_string(),))
}

fn feature_matrix(row_ids: Vec<String>, rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    if row_ids.len() != rows.len() {
        return Err(value_err("row_ids and rows differ in length"));
    }
    let values = rows
        .into_iter()
        .map(|r| <[f64; N_FEATURES]>::try_from(r).map_err(|r| value_err(format!("expected {N_FEATURES} features, got {}", r.len()))))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(FeatureMatrix { row_ids, values })
}

#[pyclass(module = "subtypes", skip_from_py_object)]
#[derive(Clone)]
pub struct UmapConfig {
    #[pyo3(get, set)]
    pub n_neighbors: usize,
    #[pyo3(get, set)]
    pub min_dist: f64,
    #[pyo3(get, set)]
    pub spread: f64,
    #[pyo3(get, set)]
    pub n_epochs: usize,
    #[pyo3(get, set)]
    pub negative_sample_rate: usize,
    #[pyo3(get, set)]
    pub initial_lr: f64,
    #[pyo3(get, set)]
    pub seed: u64,
    #[pyo3(get, set)]
    pub deterministic: bool,
}

impl UmapConfig {
    fn inner(&self) -> umap::UmapConfig {
        umap::UmapConfig {
            n_neighbors: self.n_neighbors,
            min_dist: self.min_dist,
            spread: self.spread,
            n_epochs: self.n_epochs,
            negative_sample_rate: self.negative_sample_rate,
            initial_lr: self.initial_lr,
            seed: self.seed,
            deterministic: self.deterministic,
            ..Default::default()
        }
    }
}

#[pymethods]
impl UmapConfig {
    #[new]
    #[pyo3(signature = (n_neighbors=15, min_dist=0.1, spread=1.0, n_epochs=500, negative_sample_rate=5, initial_lr=1.0, seed=42, deterministic=true))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_neighbors: usize,
        min_dist: f64,
        spread: f64,
        n_epochs: usize,
        negative_sample_rate: usize,
        initial_lr: f64,
        seed: u64,
        deterministic: bool,
    ) -> Self {
        Self { n_neighbors, min_dist, spread, n_epochs, negative_sample_rate, initial_lr, seed, deterministic }
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner())
    }
}

#[pyclass(module = "subtypes", skip_from_py_object)]
#[derive(Clone)]
pub struct HdbscanConfig {
    #[pyo3(get, set)]
    pub min_cluster_size: usize,
    #[pyo3(get, set)]
    pub min_samples: Option<usize>,
    #[pyo3(get, set)]
    pub allow_single_cluster: bool,
}

#[pymethods]
impl HdbscanConfig {
    #[new]
    #[pyo3(signature = (min_cluster_size=100, min_samples=None, allow_single_cluster=false))]
    fn new(min_cluster_size: usize, min_samples: Option<usize>, allow_single_cluster: bool) -> Self {
        Self { min_cluster_size, min_samples, allow_single_cluster }
    }

    fn __repr__(&self) -> String {
        format!(
            "HdbscanConfig(min_cluster_size={}, min_samples={:?}, allow_single_cluster={})",
            self.min_cluster_size, self.min_samples, self.allow_single_cluster
        )
    }
}

#[pyclass(module = "subtypes", skip_from_py_object)]
#[derive(Clone)]
pub struct ExplainerConfig {
    #[pyo3(get, set)]
    pub n_samples: usize,
    #[pyo3(get, set)]
    pub mutation_sd_scale: f64,
    #[pyo3(get, set)]
    pub tree_max_depth: usize,
    #[pyo3(get, set)]
    pub min_leaf: usize,
    #[pyo3(get, set)]
    pub seed: u64,
}

#[pymethods]
impl ExplainerConfig {
    #[new]
    #[pyo3(signature = (n_samples=25000, mutation_sd_scale=0.3, tree_max_depth=4, min_leaf=50, seed=42))]
    fn new(n_samples: usize, mutation_sd_scale: f64, tree_max_depth: usize, min_leaf: usize, seed: u64) -> Self {
        Self { n_samples, mutation_sd_scale, tree_max_depth, min_leaf, seed }
    }
}

/// Whole-pipeline configuration, backed by the TOML format the CLI reads.
#[pyclass(module = "subtypes")]
pub struct PipelineConfig {
    inner: pipeline::PipelineConfig,
}

#[pymethods]
impl PipelineConfig {
    #[new]
    #[pyo3(signature = (out="out".to_string(), seed=42, threads=1, n_admissions=None))]
    fn new(out: String, seed: u64, threads: usize, n_admissions: Option<usize>) -> Self {
        let mut inner = pipeline::PipelineConfig { seed, threads, ..Default::default() };
        inner.paths.out = PathBuf::from(out);
        if let Some(n) = n_admissions {
            inner.synth.n_admissions = n;
        }
        Self { inner }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        pipeline::PipelineConfig::from_toml(text).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    #[getter]
    fn out(&self) -> String {
        self.inner.paths.out.display().to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn n_admissions(&self) -> usize {
        self.inner.synth.n_admissions
    }

    #[setter]
    fn set_n_admissions(&mut self, n: usize) {
        self.inner.synth.n_admissions = n;
    }

    #[getter]
    fn min_cluster_size(&self) -> Option<usize> {
        self.inner.hdbscan.min_cluster_size
    }

    #[setter]
    fn set_min_cluster_size(&mut self, v: Option<usize>) {
        self.inner.hdbscan.min_cluster_size = v;
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.explain.n_samples
    }

    #[setter]
    fn set_n_samples(&mut self, v: usize) {
        self.inner.explain.n_samples = v;
    }
}

fn parse_stage(name: &str) -> PyResult<Stage> {
    Stage::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| value_err(format!("unknown stage `{name}`")))
}

/// Runs the named stages (all of them when `stages` is None). Returns the
/// per-stage durations in seconds.
#[pyfunction]
#[pyo3(signature = (config, stages=None))]
fn run(py: Python<'_>, config: PyRef<'_, PipelineConfig>, stages: Option<Vec<String>>) -> PyResult<Vec<(String, f64)>> {
    let cfg = config.inner.clone();
    let stages = match stages {
        Some(names) => names.iter().map(|n| parse_stage(n)).collect::<PyResult<Vec<_>>>()?,
        None => pipeline::all_stages(&cfg),
    };
    py.detach(|| pipeline::run_stages(&stages, &cfg))
        .map(|v| v.into_iter().map(|(s, t)| (s.name().to_string(), t)).collect())
        .map_err(|e| PyRuntimeError::new_err(e.record().to_string()))
}

/// `(a, b)` of the low-dimensional similarity curve.
#[pyfunction]
#[pyo3(signature = (min_dist, spread=1.0))]
fn fit_ab(min_dist: f64, spread: f64) -> PyResult<(f64, f64)> {
    umap::fit_ab(min_dist, spread).map(|f| (f.a, f.b)).map_err(value_err)
}

/// 2-D embedding of `rows`; returns one `(x, y)` per input row.
#[pyfunction]
fn embed(py: Python<'_>, row_ids: Vec<String>, rows: Vec<Vec<f64>>, config: PyRef<'_, UmapConfig>) -> PyResult<Vec<(f64, f64)>> {
    let m = feature_matrix(row_ids, rows)?;
    let cfg = config.inner();
    let model = py.detach(|| umap::embed(&m, &cfg)).map_err(value_err)?;
    Ok(model.embedding.coords.iter().map(|p| (p[0], p[1])).collect())
}

/// HDBSCAN labels (-1 for noise, clusters numbered by descending size).
#[pyfunction]
fn cluster(py: Python<'_>, row_ids: Vec<String>, coords: Vec<(f64, f64)>, config: PyRef<'_, HdbscanConfig>) -> PyResult<Vec<i32>> {
    if row_ids.len() != coords.len() {
        return Err(value_err("row_ids and coords differ in length"));
    }
    let e = Embedding2D { row_ids, coords: coords.into_iter().map(|(x, y)| [x, y]).collect() };
    let cfg = hdbscan::HdbscanConfig {
        min_cluster_size: config.min_cluster_size,
        min_samples: config.min_samples,
        allow_single_cluster: config.allow_single_cluster,
        seed: 0,
    };
    py.detach(|| hdbscan::cluster(&e, &cfg)).map(|c| c.labels.labels).map_err(value_err)
}

/// Per-cluster feature importances and surrogate accuracy, keyed by cluster.
#[pyfunction]
#[pyo3(name = "explain")]
fn explain_clusters<'py>(
    py: Python<'py>,
    row_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<i32>,
    config: PyRef<'_, ExplainerConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = feature_matrix(row_ids.clone(), rows)?;
    let l = ClusterLabels { row_ids, labels };
    let cfg = explain::ExplainerConfig {
        n_samples: config.n_samples,
        mutation_sd_scale: config.mutation_sd_scale,
        tree_max_depth: config.tree_max_depth,
        min_leaf: config.min_leaf,
        seed: config.seed,
    };
    let (_, results) = py.detach(|| explain::explain_all_clusters(&m, &l, &cfg)).map_err(value_err)?;
    to_py(py, &explain::importance_json(&results))
}

/// Synthetic cohort from the default five-subtype spec, as CSV text.
#[pyfunction]
#[pyo3(signature = (n_admissions, seed=42))]
fn generate_cohort<'py>(py: Python<'py>, n_admissions: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let spec = synth::default_paper_spec().with_n(n_admissions).with_seed(seed);
    let files = synth::generate_cohort(&spec).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("admissions", files.admissions_csv)?;
    d.set_item("vitals", files.vitals_csv)?;
    d.set_item("planted_labels", files.planted_labels_csv)?;
    Ok(d)
}

/// The default synthetic spec as a nested dict.
#[pyfunction]
fn default_spec(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let v = serde_json::to_value(synth::default_paper_spec()).map_err(value_err)?;
    to_py(py, &v)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<i64>, b: Vec<i64>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(value_err("labelings differ in length"));
    }
    Ok(metrics::adjusted_rand_index(&a, &b))
}

/// `(percent_diff, ci_half_width)`; both None when the population mean is 0.
#[pyfunction]
fn percent_diff(values: Vec<f64>, population_mean: f64, population_n: usize) -> (Option<f64>, Option<f64>) {
    let r = report::percent_diff_ci(&values, population_mean, population_n);
    (r.percent_diff, r.ci_half_width)
}

#[pymodule]
fn subtypes(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<UmapConfig>()?;
    m.add_class::<HdbscanConfig>()?;
    m.add_class::<ExplainerConfig>()?;
    m.add_class::<PipelineConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ab, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(explain_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(generate_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(default_spec, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(percent_diff, m)?)?;
    m.add("FEATURES", ["temperature", "sbp", "heart_rate", "sats", "resp_rate", "consciousness"])?;
    Ok(())
}
