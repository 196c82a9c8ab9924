//! Density-based hierarchical clustering of the 2-D embedding.

pub mod condense;
pub mod extract;
pub mod mst;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condense::{condense_tree, CondensedTree};
pub use extract::{select_clusters, Selection};
pub use mst::{build_mst, core_distances, mutual_reachability, Mst, MstEdge};

use crate::umap::{canonical_order, Embedding2D};

#[derive(Debug, Error)]
pub enum HdbscanError {
    #[error("invalid HDBSCAN config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdbscanConfig {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub allow_single_cluster: bool,
    /// Recorded for provenance; the algorithm itself draws no randomness.
    pub seed: u64,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        Self { min_cluster_size: 100, min_samples: None, allow_single_cluster: false, seed: 42 }
    }
}

impl HdbscanConfig {
    pub fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self, n: usize) -> Result<(), HdbscanError> {
        if self.min_cluster_size < 2 {
            return Err(HdbscanError::InvalidConfig { field: "min_cluster_size", reason: "must be >= 2".into() });
        }
        let ms = self.effective_min_samples();
        if ms < 1 || ms + 1 > n {
            return Err(HdbscanError::InvalidConfig {
                field: "min_samples",
                reason: format!("must satisfy 1 <= min_samples <= n - 1 (min_samples = {ms}, n = {n})"),
            });
        }
        Ok(())
    }
}

/// Per-admission labels; -1 is noise, clusters are `0..K` by descending size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub row_ids: Vec<String>,
    pub labels: Vec<i32>,
}

impl ClusterLabels {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                s[l as usize] += 1;
            }
        }
        s
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.noise_count() as f64 / self.labels.len() as f64
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["admission_id", "cluster"])?;
        for (id, l) in self.row_ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, String> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| e.to_string())?.clone();
        if header.iter().collect::<Vec<_>>() != ["admission_id", "cluster"] {
            return Err(format!("unexpected labels header {header:?}"));
        }
        let mut out = Self { row_ids: Vec::new(), labels: Vec::new() };
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let l: i32 = rec[1].parse().map_err(|_| format!("line {}: bad cluster label", line + 2))?;
            out.row_ids.push(rec[0].to_string());
            out.labels.push(l);
        }
        Ok(out)
    }
}

/// Audit view of a condensed-tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    pub size: usize,
    pub stability: f64,
    pub selected: bool,
    /// Final label if selected.
    pub label: Option<i32>,
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub labels: ClusterLabels,
    pub tree: CondensedTree,
    pub selection: Selection,
    pub mst: Mst,
    /// Condensed-tree node behind each final label.
    pub label_nodes: Vec<usize>,
}

impl Clustering {
    pub fn tree_records(&self) -> Vec<TreeNodeRecord> {
        self.tree
            .nodes
            .iter()
            .map(|c| TreeNodeRecord {
                id: c.id,
                parent: c.parent,
                lambda_birth: c.lambda_birth,
                size: c.size,
                stability: self.selection.stabilities[c.id],
                selected: self.selection.selected[c.id],
                label: self.label_nodes.iter().position(|&n| n == c.id).map(|l| l as i32),
            })
            .collect()
    }
}

/// HDBSCAN on the embedding. Rows are processed in sorted `row_id` order so
/// that permuting the input leaves every admission's label unchanged.
pub fn cluster(embedding: &Embedding2D, config: &HdbscanConfig) -> Result<Clustering, HdbscanError> {
    let n = embedding.len();
    config.validate(n)?;
    let order = canonical_order(&embedding.row_ids);
    let pts: Vec<[f64; 2]> = order.iter().map(|&i| embedding.coords[i]).collect();
    let cores = core_distances(&pts, config.effective_min_samples());
    let mst = build_mst(&pts, &cores);
    let tree = condense_tree(&mst, config.min_cluster_size);
    let selection = select_clusters(&tree, config.allow_single_cluster);
    let raw = extract::raw_labels(&tree, &selection);
    let sorted_labels = extract::renumber_by_size(&raw);

    let mut label_nodes = vec![0; sorted_labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)];
    for (r, l) in raw.iter().zip(&sorted_labels) {
        if *l >= 0 {
            label_nodes[*l as usize] = *r as usize;
        }
    }
    let mut labels = vec![-1; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = sorted_labels[pos];
    }
    Ok(Clustering {
        labels: ClusterLabels { row_ids: embedding.row_ids.clone(), labels },
        tree,
        selection,
        mst,
        label_nodes,
    })
}
