//! UMAP reduction of the 6-D feature matrix to a 2-D embedding.

pub mod curve;
pub mod fuzzy;
pub mod optimize;
pub mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{fit_ab, CurveFit};
pub use fuzzy::{fuzzy_simplicial_set, knn_exact, smooth_knn, FuzzyGraph, KnnGraph, SmoothKnn};
pub use optimize::{optimize_layout, SgdParams};
pub use spectral::{spectral_init, SpectralInit};

use crate::preprocess::{FeatureMatrix, N_FEATURES};
use crate::rng;

#[derive(Debug, Error)]
pub enum UmapError {
    #[error("n_neighbors must satisfy 2 <= k < n (k = {k}, n = {n})")]
    InvalidNeighbors { k: usize, n: usize },
    #[error("invalid UMAP config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("curve fit for (a, b) diverged; residual trace {trace:?}")]
    CurveFitDiverged { trace: Vec<f64> },
    #[error("non-finite coordinate at epoch {epoch} on edge ({head}, {tail})")]
    NonFinite { epoch: usize, head: usize, tail: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub metric: Metric,
    pub deterministic: bool,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            n_epochs: 500,
            negative_sample_rate: 5,
            initial_lr: 1.0,
            seed: 42,
            metric: Metric::Euclidean,
            deterministic: true,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self, n: usize) -> Result<(), UmapError> {
        if self.n_neighbors < 2 || self.n_neighbors >= n {
            return Err(UmapError::InvalidNeighbors { k: self.n_neighbors, n });
        }
        let bad = |field, reason: &str| Err(UmapError::InvalidConfig { field, reason: reason.to_string() });
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return bad("spread", "must be finite and > 0");
        }
        if !(self.min_dist > 0.0 && self.min_dist <= self.spread) {
            return bad("min_dist", "must satisfy 0 < min_dist <= spread");
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return bad("initial_lr", "must be finite and > 0");
        }
        Ok(())
    }
}

/// 2-D coordinates aligned with the feature matrix rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub row_ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
}

impl Embedding2D {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["admission_id", "x", "y"])?;
        for (id, p) in self.row_ids.iter().zip(&self.coords) {
            w.write_record([id.as_str(), &p[0].to_string(), &p[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, String> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| e.to_string())?.clone();
        if header.iter().collect::<Vec<_>>() != ["admission_id", "x", "y"] {
            return Err(format!("unexpected embedding header {header:?}"));
        }
        let mut e = Self { row_ids: Vec::new(), coords: Vec::new() };
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|err| err.to_string())?;
            let parse = |k: usize| {
                rec[k].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("line {}: bad coordinate", line + 2))
            };
            e.coords.push([parse(1)?, parse(2)?]);
            e.row_ids.push(rec[0].to_string());
        }
        Ok(e)
    }
}

/// Everything needed to audit an embedding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmapModel {
    pub config: UmapConfig,
    pub a: f64,
    pub b: f64,
    pub curve_residual: f64,
    /// Digest of the scaler that produced the features, when known.
    pub scaler_ref: Option<String>,
    /// Row order of `graph` (sorted admission ids).
    pub graph_row_ids: Vec<String>,
    pub graph: FuzzyGraph,
    pub n_components: usize,
    pub fallback_components: usize,
    #[serde(skip)]
    pub embedding: Embedding2D,
}

impl Default for Embedding2D {
    fn default() -> Self {
        Self { row_ids: Vec::new(), coords: Vec::new() }
    }
}

/// Order that sorts rows by id; ties keep input order.
pub(crate) fn canonical_order(row_ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row_ids.len()).collect();
    order.sort_by(|&i, &j| row_ids[i].cmp(&row_ids[j]));
    order
}

/// kNN graph, fuzzy set, curve fit, spectral init and SGD.
///
/// Rows are processed in sorted `row_id` order internally, so permuting the
/// input permutes the output identically in deterministic mode.
pub fn embed(features: &FeatureMatrix, config: &UmapConfig) -> Result<UmapModel, UmapError> {
    let n = features.len();
    config.validate(n)?;
    let fit = fit_ab(config.min_dist, config.spread)?;

    let order = canonical_order(&features.row_ids);
    let rows: Vec<[f64; N_FEATURES]> = order.iter().map(|&i| features.values[i]).collect();
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(UmapError::InvalidConfig { field: "features", reason: "non-finite feature value".into() });
    }
    let knn = knn_exact(&rows, config.n_neighbors)?;
    let graph = fuzzy_simplicial_set(&knn);
    let init = spectral_init(&graph, rng::derive_seed(config.seed, "umap-init"));
    let params = SgdParams {
        a: fit.a,
        b: fit.b,
        n_epochs: config.n_epochs,
        negative_sample_rate: config.negative_sample_rate,
        initial_lr: config.initial_lr,
        seed: rng::derive_seed(config.seed, "umap-sgd"),
        deterministic: config.deterministic,
    };
    let sorted = optimize_layout(&graph, &init.coords, &params)?;

    let mut coords = vec![[0.0; 2]; n];
    for (pos, &i) in order.iter().enumerate() {
        coords[i] = sorted[pos];
    }
    Ok(UmapModel {
        config: config.clone(),
        a: fit.a,
        b: fit.b,
        curve_residual: fit.residual,
        scaler_ref: None,
        graph_row_ids: order.iter().map(|&i| features.row_ids[i].clone()).collect(),
        graph,
        n_components: init.n_components,
        fallback_components: init.fallback_components,
        embedding: Embedding2D { row_ids: features.row_ids.clone(), coords },
    })
}
