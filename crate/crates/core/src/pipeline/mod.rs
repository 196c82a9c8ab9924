//! Stage orchestration over an artifact directory.
//!
//! Layout under the output root:
//!
//! ```text
//! synth/        admissions.csv vitals.csv planted_labels.csv [degrade_manifest.json]
//! cohort/       cohort.csv filter_log.json rejects.csv summary.json
//! embedding/    features.csv scaler.json embedding.csv umap.json
//! clusters/     labels.csv condensed_tree.json summary.json
//! explanations/ importance.json importance.csv trees.json samples_<c>.csv
//! report/       cluster_summary.csv percent_diff.csv icd10_heatmap.csv overlays.csv clinician_samples.json index.json
//! manifest.json timings.json
//! ```
//!
//! Each stage reads only its predecessors' files and records their sha256
//! digests, its own outputs' digests and a hash of the config it used in
//! `manifest.json`. Wall-clock durations go to `timings.json` so the rest of
//! the tree is reproducible byte for byte.

pub mod cli;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::explain::{self, ExplainError, ExplainerConfig};
use crate::hdbscan::{self, ClusterLabels, HdbscanConfig, HdbscanError};
use crate::ingest::{self, Cohort, FilterLog};
use crate::preprocess::{self, PreprocessConfig, PreprocessError};
use crate::report::{self, CiMethod};
use crate::rng;
use crate::synth::{self, CohortFiles, DegradeSpec, SynthError};
use crate::umap::{self, Embedding2D, UmapConfig, UmapError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// Published cohort size and cluster floor the default min_cluster_size is
/// scaled from.
const REFERENCE_COHORT: f64 = synth::PAPER_N_ADMISSIONS as f64;
const REFERENCE_MIN_CLUSTER_SIZE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Synth,
    Ingest,
    Embed,
    Cluster,
    Explain,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Synth, Stage::Ingest, Stage::Embed, Stage::Cluster, Stage::Explain, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    /// Directory of the stage's artifacts, relative to the output root.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "cohort",
            Stage::Embed => "embedding",
            Stage::Cluster => "clusters",
            Stage::Explain => "explanations",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: missing input artifact {}", path.display())]
    MissingArtifact { stage: &'static str, path: PathBuf },
    #[error("config violation at `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingArtifact { .. } => 2,
            PipelineError::Config { .. } => 3,
            _ => 1,
        }
    }

    /// One-line JSON description for stderr.
    pub fn record(&self) -> serde_json::Value {
        match self {
            PipelineError::MissingArtifact { stage, path } => {
                json!({"error": "missing_artifact", "stage": stage, "path": path.display().to_string(), "message": self.to_string()})
            }
            PipelineError::Config { field, reason } => {
                json!({"error": "config", "field": field, "reason": reason, "message": self.to_string()})
            }
            PipelineError::Io { path, .. } => {
                json!({"error": "io", "path": path.display().to_string(), "message": self.to_string()})
            }
            PipelineError::Stage { stage, message } => json!({"error": "stage", "stage": stage, "message": message}),
        }
    }
}

fn config_err(field: impl Into<String>, reason: impl Into<String>) -> PipelineError {
    PipelineError::Config { field: field.into(), reason: reason.into() }
}

fn stage_err(stage: Stage, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage { stage: stage.name(), message: e.to_string() }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec { field, reason } => config_err(format!("synth.{field}"), reason),
            SynthError::TooManyDefects { .. } => config_err("synth.degrade", e.to_string()),
            other => stage_err(Stage::Synth, other),
        }
    }
}

impl From<PreprocessError> for PipelineError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::InvalidConfig { field, reason } => config_err(format!("preprocess.{field}"), reason),
            other => stage_err(Stage::Embed, other),
        }
    }
}

impl From<UmapError> for PipelineError {
    fn from(e: UmapError) -> Self {
        match e {
            UmapError::InvalidConfig { field, reason } => config_err(format!("umap.{field}"), reason),
            UmapError::InvalidNeighbors { .. } => config_err("umap.n_neighbors", e.to_string()),
            other => stage_err(Stage::Embed, other),
        }
    }
}

impl From<HdbscanError> for PipelineError {
    fn from(e: HdbscanError) -> Self {
        match e {
            HdbscanError::InvalidConfig { field, reason } => config_err(format!("hdbscan.{field}"), reason),
        }
    }
}

impl From<ExplainError> for PipelineError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::InvalidConfig { field, reason } => config_err(format!("explain.{field}"), reason),
            other => stage_err(Stage::Explain, other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    /// External inputs; when unset, ingest reads the synth stage's files.
    pub admissions: Option<PathBuf>,
    pub vitals: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self { out: PathBuf::from("out"), admissions: None, vitals: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_admissions: usize,
    /// Defect rates in `[0, 1)`; both zero leaves the cohort clean.
    pub missing_rate: f64,
    pub short_stay_rate: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n_admissions: synth::PAPER_N_ADMISSIONS, missing_rate: 0.0, short_stay_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct HdbscanSection {
    /// Unset: `max(5, round(100 n / 95825))` for a cohort of `n`.
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub allow_single_cluster: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// ICD10 heatmap retention threshold, percent.
    pub threshold: f64,
    pub samples_per_cluster: usize,
    pub ci: CiMethod,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { threshold: 2.0, samples_per_cluster: 20, ci: CiMethod::Normal }
    }
}

/// Whole-run configuration. The top-level `seed` drives every stage; the
/// `seed` keys inside the nested sections are overwritten with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub paths: Paths,
    pub synth: SynthSection,
    pub preprocess: PreprocessConfig,
    pub umap: UmapConfig,
    pub hdbscan: HdbscanSection,
    pub explain: ExplainerConfig,
    pub report: ReportSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            threads: 0,
            paths: Paths::default(),
            synth: SynthSection::default(),
            preprocess: PreprocessConfig::default(),
            umap: UmapConfig::default(),
            hdbscan: HdbscanSection::default(),
            explain: ExplainerConfig::default(),
            report: ReportSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| config_err("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    /// Checks everything that does not depend on the cohort size.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.cohort_spec().validate()?;
        for (field, r) in [("synth.missing_rate", self.synth.missing_rate), ("synth.short_stay_rate", self.synth.short_stay_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(config_err(field, format!("{r} outside [0, 1)")));
            }
        }
        if self.synth.missing_rate + self.synth.short_stay_rate >= 1.0 {
            return Err(config_err("synth", "defect rates must sum below 1"));
        }
        self.preprocess.validate()?;
        // n only bounds n_neighbors, which is checked again once n is known
        self.umap().validate(usize::MAX)?;
        if self.hdbscan.min_cluster_size.is_some_and(|m| m < 2) {
            return Err(config_err("hdbscan.min_cluster_size", "must be >= 2"));
        }
        if self.hdbscan.min_samples == Some(0) {
            return Err(config_err("hdbscan.min_samples", "must be >= 1"));
        }
        self.explainer().validate()?;
        if !(0.0..=100.0).contains(&self.report.threshold) {
            return Err(config_err("report.threshold", "must lie in [0, 100] percent"));
        }
        if self.report.samples_per_cluster == 0 {
            return Err(config_err("report.samples_per_cluster", "must be >= 1"));
        }
        if let CiMethod::Bootstrap { resamples: 0, .. } = self.report.ci {
            return Err(config_err("report.ci.resamples", "must be >= 1"));
        }
        Ok(())
    }

    pub fn cohort_spec(&self) -> synth::CohortSpec {
        synth::default_paper_spec().with_n(self.synth.n_admissions).with_seed(self.seed)
    }

    pub fn umap(&self) -> UmapConfig {
        UmapConfig { seed: self.seed, ..self.umap.clone() }
    }

    pub fn explainer(&self) -> ExplainerConfig {
        ExplainerConfig { seed: self.seed, ..self.explain.clone() }
    }

    pub fn hdbscan_for(&self, n: usize) -> HdbscanConfig {
        HdbscanConfig {
            min_cluster_size: self.hdbscan.min_cluster_size.unwrap_or_else(|| default_min_cluster_size(n)),
            min_samples: self.hdbscan.min_samples,
            allow_single_cluster: self.hdbscan.allow_single_cluster,
            seed: self.seed,
        }
    }

    fn ci(&self) -> CiMethod {
        match self.report.ci {
            CiMethod::Bootstrap { resamples, .. } => CiMethod::Bootstrap { resamples, seed: rng::derive_seed(self.seed, "bootstrap") },
            m => m,
        }
    }

    /// Hash of the part of the config a stage depends on.
    fn stage_hash(&self, stage: Stage) -> String {
        let v = match stage {
            Stage::Synth => json!({"seed": self.seed, "synth": self.synth}),
            Stage::Ingest => json!({"admissions": self.paths.admissions, "vitals": self.paths.vitals}),
            Stage::Embed => json!({"preprocess": self.preprocess, "umap": self.umap()}),
            Stage::Cluster => json!({"seed": self.seed, "hdbscan": self.hdbscan}),
            Stage::Explain => json!({"explain": self.explainer()}),
            Stage::Report => json!({"seed": self.seed, "report": self.report}),
        };
        sha256_hex(v.to_string().as_bytes())
    }
}

pub fn default_min_cluster_size(n: usize) -> usize {
    ((REFERENCE_MIN_CLUSTER_SIZE * n as f64 / REFERENCE_COHORT).round() as usize).max(5)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Manifest {
    pub fn load(out: &Path) -> Self {
        fs::read(out.join(MANIFEST_FILE)).ok().and_then(|b| serde_json::from_slice(&b).ok()).unwrap_or_default()
    }
}

/// File access for one stage: reads are digested as inputs, writes as
/// outputs, and paths are reported relative to the output root.
struct StageIo<'a> {
    stage: Stage,
    out: &'a Path,
    record: StageRecord,
}

impl<'a> StageIo<'a> {
    fn new(stage: Stage, out: &'a Path, cfg: &PipelineConfig) -> Self {
        Self { stage, out, record: StageRecord { config_hash: cfg.stage_hash(stage), ..Default::default() } }
    }

    fn key(&self, path: &Path) -> String {
        let rel = path.strip_prefix(self.out).unwrap_or(path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>, PipelineError> {
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact { stage: self.stage.name(), path: path.to_path_buf() });
        }
        let bytes = fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        self.record.inputs.insert(self.key(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn read_rel(&mut self, rel: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.out.join(rel);
        self.read(&path)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
        }
        fs::write(&path, bytes).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        self.record.outputs.insert(self.key(&path), sha256_hex(bytes));
        Ok(())
    }

    fn write_json(&mut self, rel: &str, v: &impl Serialize) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| stage_err(self.stage, e))?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn write_csv(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<(), PipelineError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| stage_err(self.stage, e))?;
        self.write(rel, &buf)
    }

    /// Removes stale files from the stage directory before writing.
    fn clear_dir(&self) -> Result<(), PipelineError> {
        let dir = self.out.join(self.stage.dir());
        if dir.is_dir() {
            fs::remove_dir_all(&dir).map_err(|source| PipelineError::Io { path: dir, source })?;
        }
        Ok(())
    }

    fn finish(self) -> Result<StageRecord, PipelineError> {
        let mut m = Manifest::load(self.out);
        m.stages.insert(self.stage, self.record.clone());
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| stage_err(self.stage, e))?;
        bytes.push(b'\n');
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, bytes).map_err(|source| PipelineError::Io { path, source })?;
        Ok(self.record)
    }
}

fn rel(stage: Stage, file: &str) -> String {
    format!("{}/{file}", stage.dir())
}

fn parse_json<T: for<'de> Deserialize<'de>>(stage: Stage, bytes: &[u8]) -> Result<T, PipelineError> {
    serde_json::from_slice(bytes).map_err(|e| stage_err(stage, e))
}

fn run_synth(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let spec = cfg.cohort_spec();
    let files = synth::generate_cohort(&spec)?;
    let degrade = DegradeSpec::rates(cfg.synth.missing_rate, cfg.synth.short_stay_rate);
    let (files, manifest) = synth::degrade_cohort(&files, &degrade, rng::derive_seed(cfg.seed, "degrade"))?;
    io.write(&rel(Stage::Synth, synth::ADMISSIONS_FILE), files.admissions_csv.as_bytes())?;
    io.write(&rel(Stage::Synth, synth::VITALS_FILE), files.vitals_csv.as_bytes())?;
    io.write(&rel(Stage::Synth, synth::PLANTED_LABELS_FILE), files.planted_labels_csv.as_bytes())?;
    if manifest.total() > 0 {
        io.write_json(&rel(Stage::Synth, "degrade_manifest.json"), &manifest)?;
    }
    info!("synth: {} admissions, {} injected defects", spec.n_admissions, manifest.total());
    Ok(())
}

fn run_ingest(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let out = io.out.to_path_buf();
    let adm_path = cfg.paths.admissions.clone().unwrap_or_else(|| out.join(rel(Stage::Synth, synth::ADMISSIONS_FILE)));
    let vit_path = cfg.paths.vitals.clone().unwrap_or_else(|| out.join(rel(Stage::Synth, synth::VITALS_FILE)));
    let adm = io.read(&adm_path)?;
    let vit = io.read(&vit_path)?;
    let parsed = ingest::parse_admissions(adm.as_slice(), vit.as_slice()).map_err(|e| stage_err(Stage::Ingest, e))?;
    let cohort = ingest::filter_cohort(&parsed.admissions, &parsed.vitals).map_err(|e| stage_err(Stage::Ingest, e))?;
    io.write_csv(&rel(Stage::Ingest, "cohort.csv"), |b| {
        ingest::write_cohort_csv(&cohort, b).map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))
    })?;
    io.write_json(&rel(Stage::Ingest, "filter_log.json"), &cohort.filter_log)?;
    io.write_csv(&rel(Stage::Ingest, "rejects.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["file", "line", "reason"])?;
        for r in &parsed.rejects {
            w.write_record([r.file.to_string(), r.line.to_string(), r.reason.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    io.write_json(&rel(Stage::Ingest, "summary.json"), &ingest::cohort_summary(&cohort))?;
    info!("ingest: {} admissions retained, {} excluded, {} rows rejected", cohort.len(), cohort.filter_log.total(), parsed.rejects.len());
    Ok(())
}

fn load_cohort(io: &mut StageIo) -> Result<Cohort, PipelineError> {
    let log_bytes = io.read_rel(&rel(Stage::Ingest, "filter_log.json"))?;
    let filter_log: FilterLog = parse_json(io.stage, &log_bytes)?;
    let bytes = io.read_rel(&rel(Stage::Ingest, "cohort.csv"))?;
    ingest::read_cohort_csv(bytes.as_slice(), filter_log).map_err(|e| stage_err(io.stage, e))
}

fn load_embedding(io: &mut StageIo) -> Result<Embedding2D, PipelineError> {
    let bytes = io.read_rel(&rel(Stage::Embed, "embedding.csv"))?;
    Embedding2D::read_csv(bytes.as_slice()).map_err(|e| stage_err(io.stage, e))
}

fn load_labels(io: &mut StageIo) -> Result<ClusterLabels, PipelineError> {
    let bytes = io.read_rel(&rel(Stage::Cluster, "labels.csv"))?;
    ClusterLabels::read_csv(bytes.as_slice()).map_err(|e| stage_err(io.stage, e))
}

fn run_embed(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let cohort = load_cohort(io)?;
    let (features, scaler) = preprocess::assemble_matrix(&cohort, &cfg.preprocess)?;
    io.write_csv(&rel(Stage::Embed, "features.csv"), |b| preprocess::write_matrix_csv(&features, b))?;
    io.write_json(&rel(Stage::Embed, "scaler.json"), &scaler)?;
    let scaler_ref = io.record.outputs.get(&rel(Stage::Embed, "scaler.json")).cloned();
    let mut model = umap::embed(&features, &cfg.umap())?;
    model.scaler_ref = scaler_ref;
    io.write_csv(&rel(Stage::Embed, "embedding.csv"), |b| model.embedding.write_csv(b))?;
    io.write_json(
        &rel(Stage::Embed, "umap.json"),
        &json!({
            "config": model.config,
            "a": model.a,
            "b": model.b,
            "curve_residual": model.curve_residual,
            "scaler_ref": model.scaler_ref,
            "n_points": model.graph_row_ids.len(),
            "n_stored_edges": model.graph.indices.len(),
            "n_components": model.n_components,
            "fallback_components": model.fallback_components,
        }),
    )?;
    info!("embed: {} points, {} graph components", features.len(), model.n_components);
    Ok(())
}

fn run_cluster(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let embedding = load_embedding(io)?;
    let hc = cfg.hdbscan_for(embedding.len());
    let c = hdbscan::cluster(&embedding, &hc)?;
    io.write_csv(&rel(Stage::Cluster, "labels.csv"), |b| c.labels.write_csv(b))?;
    io.write_json(&rel(Stage::Cluster, "condensed_tree.json"), &c.tree_records())?;
    io.write_json(
        &rel(Stage::Cluster, "summary.json"),
        &json!({
            "config": hc,
            "n_clusters": c.labels.n_clusters(),
            "sizes": c.labels.sizes(),
            "noise": c.labels.noise_count(),
            "noise_fraction": c.labels.noise_fraction(),
        }),
    )?;
    info!("cluster: {} clusters, {} noise points", c.labels.n_clusters(), c.labels.noise_count());
    Ok(())
}

fn run_explain(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let bytes = io.read_rel(&rel(Stage::Embed, "features.csv"))?;
    let features = preprocess::read_matrix_csv(bytes.as_slice()).map_err(|e| stage_err(Stage::Explain, e))?;
    let labels = load_labels(io)?;
    let embedding = load_embedding(io)?;
    let ec = cfg.explainer();
    let (reference, results) = explain::explain_all_clusters(&features, &labels, &ec)?;
    io.write_json(&rel(Stage::Explain, "importance.json"), &explain::importance_json(&results))?;
    io.write_csv(&rel(Stage::Explain, "importance.csv"), |b| explain::write_importance_csv(&results, b))?;
    let trees: BTreeMap<String, serde_json::Value> = results
        .iter()
        .map(|(c, r)| {
            let v = match r {
                Ok(e) => serde_json::to_value(e).unwrap_or_default(),
                Err(err) => json!({"error": err.to_string()}),
            };
            (c.to_string(), v)
        })
        .collect();
    io.write_json(&rel(Stage::Explain, "trees.json"), &trees)?;
    let coords: std::collections::HashMap<&str, [f64; 2]> =
        embedding.row_ids.iter().map(String::as_str).zip(embedding.coords.iter().copied()).collect();
    let lookup = |id: &str| coords.get(id).copied();
    for (c, r) in &results {
        if let Ok(e) = r {
            io.write_csv(&rel(Stage::Explain, &format!("samples_{c}.csv")), |b| explain::write_samples_csv(e, &reference, &lookup, b))?;
        }
    }
    info!("explain: {} clusters explained", results.values().filter(|r| r.is_ok()).count());
    Ok(())
}

fn run_report(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let cohort = load_cohort(io)?;
    let labels = load_labels(io)?;
    let embedding = load_embedding(io)?;
    let re = |e: report::ReportError| stage_err(Stage::Report, e);
    let summaries = report::summarize_clusters(&cohort, &labels).map_err(re)?;
    io.write_csv(&rel(Stage::Report, "cluster_summary.csv"), |b| report::write_summary_csv(&summaries, b))?;
    let diffs = report::percent_diff_table(&cohort, &labels, cfg.ci()).map_err(re)?;
    io.write_csv(&rel(Stage::Report, "percent_diff.csv"), |b| report::write_percent_diff_csv(&diffs, b))?;
    let heatmap = report::icd10_heatmap(&cohort, &labels, cfg.report.threshold).map_err(re)?;
    io.write_csv(&rel(Stage::Report, "icd10_heatmap.csv"), |b| report::write_heatmap_csv(&heatmap, b))?;
    let overlays = report::export_overlays(&cohort, &embedding, &labels).map_err(re)?;
    io.write_csv(&rel(Stage::Report, "overlays.csv"), |b| report::write_overlays_csv(&overlays, b))?;
    let packs = report::sample_for_clinicians(
        &cohort,
        &labels,
        &embedding,
        cfg.report.samples_per_cluster,
        rng::derive_seed(cfg.seed, "clinician-samples"),
    )
    .map_err(re)?;
    io.write_json(&rel(Stage::Report, "clinician_samples.json"), &packs)?;
    let files: Vec<String> = io.record.outputs.keys().cloned().collect();
    io.write_json(
        &rel(Stage::Report, "index.json"),
        &json!({
            "files": files,
            "population": ingest::cohort_summary(&cohort),
            "n_clusters": labels.n_clusters(),
            "retained_icd10_groups": heatmap.retained_groups().iter().map(|g| g.label()).collect::<Vec<_>>(),
        }),
    )?;
    info!("report: {} clusters summarised", labels.n_clusters());
    Ok(())
}

/// Runs one stage and records it in the manifest. Returns the stage record
/// and its wall-clock duration in seconds.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<(StageRecord, f64), PipelineError> {
    cfg.validate()?;
    let out = cfg.paths.out.as_path();
    fs::create_dir_all(out).map_err(|source| PipelineError::Io { path: out.to_path_buf(), source })?;
    let started = Instant::now();
    let mut io = StageIo::new(stage, out, cfg);
    match stage {
        Stage::Synth => {
            io.clear_dir()?;
            run_synth(cfg, &mut io)?
        }
        Stage::Ingest => {
            // inputs are checked before anything is removed
            run_ingest_checked(cfg, &mut io)?
        }
        Stage::Embed => run_after_inputs(&mut io, |io| run_embed(cfg, io))?,
        Stage::Cluster => run_after_inputs(&mut io, |io| run_cluster(cfg, io))?,
        Stage::Explain => run_after_inputs(&mut io, |io| run_explain(cfg, io))?,
        Stage::Report => run_after_inputs(&mut io, |io| run_report(cfg, io))?,
    }
    let record = io.finish()?;
    let secs = started.elapsed().as_secs_f64();
    record_timing(out, stage, secs);
    Ok((record, secs))
}

fn required_inputs(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Synth | Stage::Ingest => &[],
        Stage::Embed => &["cohort/filter_log.json", "cohort/cohort.csv"],
        Stage::Cluster => &["embedding/embedding.csv"],
        Stage::Explain => &["embedding/features.csv", "clusters/labels.csv", "embedding/embedding.csv"],
        Stage::Report => &["cohort/filter_log.json", "cohort/cohort.csv", "clusters/labels.csv", "embedding/embedding.csv"],
    }
}

fn check_inputs(io: &StageIo) -> Result<(), PipelineError> {
    for r in required_inputs(io.stage) {
        let p = io.out.join(r);
        if !p.is_file() {
            return Err(PipelineError::MissingArtifact { stage: io.stage.name(), path: p });
        }
    }
    Ok(())
}

fn run_after_inputs(io: &mut StageIo, f: impl FnOnce(&mut StageIo) -> Result<(), PipelineError>) -> Result<(), PipelineError> {
    check_inputs(io)?;
    io.clear_dir()?;
    f(io)
}

fn run_ingest_checked(cfg: &PipelineConfig, io: &mut StageIo) -> Result<(), PipelineError> {
    let out = io.out;
    for (given, file) in [(&cfg.paths.admissions, synth::ADMISSIONS_FILE), (&cfg.paths.vitals, synth::VITALS_FILE)] {
        let p = given.clone().unwrap_or_else(|| out.join(rel(Stage::Synth, file)));
        if !p.is_file() {
            return Err(PipelineError::MissingArtifact { stage: Stage::Ingest.name(), path: p });
        }
    }
    io.clear_dir()?;
    run_ingest(cfg, io)
}

fn record_timing(out: &Path, stage: Stage, secs: f64) {
    let path = out.join(TIMINGS_FILE);
    let mut t: BTreeMap<String, f64> =
        fs::read(&path).ok().and_then(|b| serde_json::from_slice(&b).ok()).unwrap_or_default();
    t.insert(stage.name().to_string(), secs);
    let _ = fs::write(&path, serde_json::to_vec_pretty(&t).unwrap_or_default());
}

/// The stages `all` runs: synth is skipped when external inputs are given.
pub fn all_stages(cfg: &PipelineConfig) -> Vec<Stage> {
    let external = cfg.paths.admissions.is_some() || cfg.paths.vitals.is_some();
    Stage::ALL.into_iter().filter(|&s| !(external && s == Stage::Synth)).collect()
}

/// Runs the stages in order inside a pool of `cfg.threads` workers.
pub fn run_stages(stages: &[Stage], cfg: &PipelineConfig) -> Result<Vec<(Stage, f64)>, PipelineError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if cfg.threads > 0 {
        builder = builder.num_threads(cfg.threads);
    }
    let pool = builder.build().map_err(|e| config_err("threads", e.to_string()))?;
    pool.install(|| stages.iter().map(|&s| run_stage(s, cfg).map(|(_, secs)| (s, secs))).collect())
}

/// Reads the planted labels written by the synth stage, if any.
pub fn planted_labels(out: &Path) -> Result<Vec<(String, u8)>, PipelineError> {
    let files = CohortFiles::read_dir(&out.join(Stage::Synth.dir()))?;
    Ok(synth::read_planted_labels(&files.planted_labels_csv)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 7;
        cfg.hdbscan.min_cluster_size = Some(30);
        cfg.paths.admissions = Some(PathBuf::from("a.csv"));
        cfg.report.ci = CiMethod::Bootstrap { resamples: 200, seed: 3 };
        cfg.umap.min_dist = 0.25;
        let text = cfg.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml(&PipelineConfig::default().to_toml()).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = PipelineConfig::from_toml("[umap]\nn_neighbours = 3\n").unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn violations_name_the_field() {
        let mut cfg = PipelineConfig::default();
        cfg.umap.min_dist = -1.0;
        match cfg.validate() {
            Err(PipelineError::Config { field, .. }) => assert_eq!(field, "umap.min_dist"),
            other => panic!("{other:?}"),
        }
        let mut cfg = PipelineConfig::default();
        cfg.report.threshold = 150.0;
        assert!(matches!(cfg.validate(), Err(PipelineError::Config { field, .. }) if field == "report.threshold"));
        let mut cfg = PipelineConfig::default();
        cfg.synth.n_admissions = 0;
        assert!(matches!(cfg.validate(), Err(PipelineError::Config { field, .. }) if field == "synth.n_admissions"));
    }

    #[test]
    fn min_cluster_size_scales_with_cohort() {
        assert_eq!(default_min_cluster_size(95_825), 100);
        assert_eq!(default_min_cluster_size(20_000), 21);
        assert_eq!(default_min_cluster_size(100), 5);
    }

    #[test]
    fn missing_predecessor_is_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { paths: Paths { out: dir.path().to_path_buf(), ..Default::default() }, ..Default::default() };
        let e = run_stage(Stage::Report, &cfg).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.record()["path"].as_str().unwrap().ends_with("cohort/filter_log.json"));
    }
}
