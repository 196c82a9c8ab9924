//! Per-cluster feature importances from surrogate decision trees.
//!
//! For each cluster: resample cohort rows with Gaussian mutation, label the
//! samples one-vs-rest by the cluster of their nearest clustered cohort row,
//! fit a shallow CART and read off its Gini importances.

pub mod tree;

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tree::{DecisionTree, TreeNode, TreeParams};

use crate::hdbscan::ClusterLabels;
use crate::neighbors;
use crate::preprocess::{Feature, FeatureMatrix, N_FEATURES};
use crate::rng;
use crate::stats::MeanSd;
use crate::umap::canonical_order;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("invalid explainer config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("empty cohort")]
    EmptyCohort,
    #[error("no clustered (non-noise) rows to label against")]
    NoClusteredRows,
    #[error("cluster {0} not present in labels")]
    UnknownCluster(i32),
    #[error("labels and features are not aligned")]
    Misaligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub n_samples: usize,
    pub mutation_sd_scale: f64,
    pub tree_max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self { n_samples: 25_000, mutation_sd_scale: 0.3, tree_max_depth: 4, min_leaf: 50, seed: 42 }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.n_samples == 0 {
            return Err(ExplainError::InvalidConfig { field: "n_samples", reason: "must be > 0".into() });
        }
        if !(self.mutation_sd_scale > 0.0 && self.mutation_sd_scale <= 1.0) {
            return Err(ExplainError::InvalidConfig {
                field: "mutation_sd_scale",
                reason: "must satisfy 0 < scale <= 1".into(),
            });
        }
        if self.tree_max_depth == 0 {
            return Err(ExplainError::InvalidConfig { field: "tree_max_depth", reason: "must be >= 1".into() });
        }
        if self.min_leaf == 0 {
            return Err(ExplainError::InvalidConfig { field: "min_leaf", reason: "must be >= 1".into() });
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams { max_depth: self.tree_max_depth, min_leaf: self.min_leaf }
    }
}

/// Per-feature population sd of the cohort rows.
pub fn feature_sds(rows: &[[f64; N_FEATURES]]) -> [f64; N_FEATURES] {
    let mut sd = [0.0; N_FEATURES];
    for (j, s) in sd.iter_mut().enumerate() {
        *s = MeanSd::from_iter(rows.iter().map(|r| r[j])).sd;
    }
    sd
}

/// `n` samples: a uniformly drawn row plus `N(0, (scale * sd_j)^2)` on each
/// feature. Returns the samples and the index of the row each was drawn from.
pub fn generate_samples(
    rows: &[[f64; N_FEATURES]],
    n: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<[f64; N_FEATURES]>, Vec<usize>), ExplainError> {
    if rows.is_empty() {
        return Err(ExplainError::EmptyCohort);
    }
    let sd = feature_sds(rows);
    let noise: Vec<Option<Normal<f64>>> =
        sd.iter().map(|&s| (scale * s > 0.0).then(|| Normal::new(0.0, scale * s).expect("finite sd"))).collect();
    let mut samples = Vec::with_capacity(n);
    let mut source = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..rows.len());
        let mut s = rows[i];
        for (j, x) in s.iter_mut().enumerate() {
            if let Some(d) = &noise[j] {
                *x += d.sample(rng);
            }
        }
        samples.push(s);
        source.push(i);
    }
    Ok((samples, source))
}

/// Nearest clustered row per sample (index into `reference`), ties by index.
pub fn nearest_anchor(
    samples: &[[f64; N_FEATURES]],
    reference: &[[f64; N_FEATURES]],
) -> Result<Vec<usize>, ExplainError> {
    if reference.is_empty() {
        return Err(ExplainError::NoClusteredRows);
    }
    Ok(neighbors::nearest_reference(reference, samples).into_iter().map(|a| a.expect("non-empty")).collect())
}

/// One-vs-rest labels: 1 iff the nearest non-noise cohort row is in `target`.
pub fn label_samples(
    samples: &[[f64; N_FEATURES]],
    features: &FeatureMatrix,
    labels: &ClusterLabels,
    target: i32,
) -> Result<Vec<u8>, ExplainError> {
    let reference = ReferenceSet::new(features, labels)?;
    if !reference.labels.contains(&target) {
        return Err(ExplainError::UnknownCluster(target));
    }
    let anchors = nearest_anchor(samples, &reference.rows)?;
    Ok(anchors.iter().map(|&a| u8::from(reference.labels[a] == target)).collect())
}

/// Non-noise cohort rows in canonical (sorted id) order.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub row_ids: Vec<String>,
    pub rows: Vec<[f64; N_FEATURES]>,
    pub labels: Vec<i32>,
}

impl ReferenceSet {
    pub fn new(features: &FeatureMatrix, labels: &ClusterLabels) -> Result<Self, ExplainError> {
        if features.row_ids != labels.row_ids {
            return Err(ExplainError::Misaligned);
        }
        let mut set = Self { row_ids: Vec::new(), rows: Vec::new(), labels: Vec::new() };
        for i in canonical_order(&features.row_ids) {
            if labels.labels[i] >= 0 {
                set.row_ids.push(features.row_ids[i].clone());
                set.rows.push(features.values[i]);
                set.labels.push(labels.labels[i]);
            }
        }
        if set.rows.is_empty() {
            return Err(ExplainError::NoClusteredRows);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterExplanation {
    pub cluster: i32,
    pub importance: [f64; N_FEATURES],
    pub tree_accuracy: f64,
    pub n_samples: usize,
    pub n_positive: usize,
    pub tree: DecisionTree,
    #[serde(skip)]
    pub samples: Vec<[f64; N_FEATURES]>,
    #[serde(skip)]
    pub sample_labels: Vec<u8>,
    /// Index into the reference set of each sample's nearest clustered row.
    #[serde(skip)]
    pub anchors: Vec<usize>,
}

impl ClusterExplanation {
    pub fn argmax_feature(&self) -> Feature {
        let mut best = 0;
        for j in 1..N_FEATURES {
            if self.importance[j] > self.importance[best] {
                best = j;
            }
        }
        Feature::ALL[best]
    }

    pub fn importance_of(&self, f: Feature) -> f64 {
        self.importance[f.index()]
    }
}

/// Generate, label, fit and score for one cluster.
pub fn explain_cluster(
    cohort_rows: &[[f64; N_FEATURES]],
    reference: &ReferenceSet,
    target: i32,
    config: &ExplainerConfig,
) -> Result<ClusterExplanation, ExplainError> {
    config.validate()?;
    if !reference.labels.contains(&target) {
        return Err(ExplainError::UnknownCluster(target));
    }
    let mut stream = rng::stream(config.seed, target as u64 + 1);
    let (samples, _) = generate_samples(cohort_rows, config.n_samples, config.mutation_sd_scale, &mut stream)?;
    let anchors = nearest_anchor(&samples, &reference.rows)?;
    let y: Vec<u8> = anchors.iter().map(|&a| u8::from(reference.labels[a] == target)).collect();
    let n_positive = y.iter().map(|&v| v as usize).sum();
    if n_positive == 0 || n_positive == y.len() {
        warn!("cluster {target}: surrogate samples are single-class; importance is all zeros");
    }
    let tree = DecisionTree::fit(&samples, &y, config.tree_params());
    Ok(ClusterExplanation {
        cluster: target,
        importance: tree.feature_importance(),
        tree_accuracy: tree.accuracy(&samples, &y),
        n_samples: samples.len(),
        n_positive,
        tree,
        samples,
        sample_labels: y,
        anchors,
    })
}

/// Explains every non-noise cluster. A failure for one cluster is reported
/// in its slot and does not stop the others.
pub fn explain_all_clusters(
    features: &FeatureMatrix,
    labels: &ClusterLabels,
    config: &ExplainerConfig,
) -> Result<(ReferenceSet, BTreeMap<i32, Result<ClusterExplanation, ExplainError>>), ExplainError> {
    config.validate()?;
    if features.is_empty() {
        return Err(ExplainError::EmptyCohort);
    }
    let reference = ReferenceSet::new(features, labels)?;
    let cohort_rows: Vec<[f64; N_FEATURES]> =
        canonical_order(&features.row_ids).into_iter().map(|i| features.values[i]).collect();
    let mut clusters: Vec<i32> = reference.labels.clone();
    clusters.sort_unstable();
    clusters.dedup();
    let results: Vec<(i32, Result<ClusterExplanation, ExplainError>)> = clusters
        .par_iter()
        .map(|&c| (c, explain_cluster(&cohort_rows, &reference, c, config)))
        .collect();
    Ok((reference, results.into_iter().collect()))
}

/// `{cluster: {temperature: w, ..., tree_accuracy: a, n_samples: m}}`
pub fn importance_json(results: &BTreeMap<i32, Result<ClusterExplanation, ExplainError>>) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for (c, r) in results {
        let mut entry = serde_json::Map::new();
        match r {
            Ok(e) => {
                for f in Feature::ALL {
                    entry.insert(f.name().into(), e.importance[f.index()].into());
                }
                entry.insert("tree_accuracy".into(), e.tree_accuracy.into());
                entry.insert("n_samples".into(), e.n_samples.into());
            }
            Err(err) => {
                entry.insert("error".into(), err.to_string().into());
            }
        }
        out.insert(c.to_string(), entry.into());
    }
    out.into()
}

/// Long-format `cluster,feature,importance` rows.
pub fn write_importance_csv<W: std::io::Write>(
    results: &BTreeMap<i32, Result<ClusterExplanation, ExplainError>>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster", "feature", "importance"])?;
    for (c, r) in results {
        if let Ok(e) = r {
            for f in Feature::ALL {
                w.write_record([c.to_string(), f.name().to_string(), e.importance[f.index()].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Samples with their label and nearest clustered row, including that row's
/// embedding coordinates so the samples can be inspected against the map.
pub fn write_samples_csv<W: std::io::Write>(
    e: &ClusterExplanation,
    reference: &ReferenceSet,
    anchor_coords: &dyn Fn(&str) -> Option<[f64; 2]>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    header.extend(["label", "anchor_id", "anchor_cluster", "anchor_x", "anchor_y"]);
    w.write_record(&header)?;
    for ((s, &y), &a) in e.samples.iter().zip(&e.sample_labels).zip(&e.anchors) {
        let id = &reference.row_ids[a];
        let xy = anchor_coords(id);
        let mut rec: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        rec.push(id.clone());
        rec.push(reference.labels[a].to_string());
        rec.push(xy.map_or(String::new(), |p| p[0].to_string()));
        rec.push(xy.map_or(String::new(), |p| p[1].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
