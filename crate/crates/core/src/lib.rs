//! Patient subtyping from admission vitals.
//!
//! The pipeline filters a hospital cohort down to admissions with a complete
//! set of vitals in the first 24 hours, maps the six vitals into a feature
//! space, embeds that space in 2-D with UMAP, clusters the embedding with
//! HDBSCAN, explains every cluster with a shallow surrogate decision tree and
//! finally produces per-cluster clinical characterisation tables.
//!
//! ```no_run
//! use subtype_core::{hdbscan, ingest, preprocess, umap};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let admissions = std::fs::read_to_string("admissions.csv")?;
//! let vitals = std::fs::read_to_string("vitals.csv")?;
//! let parsed = ingest::parse_admissions(admissions.as_bytes(), vitals.as_bytes())?;
//! let cohort = ingest::filter_cohort(&parsed.admissions, &parsed.vitals)?;
//! let (features, _scaler) = preprocess::assemble_matrix(&cohort, &Default::default())?;
//! let model = umap::embed(&features, &umap::UmapConfig::default())?;
//! let clustering = hdbscan::cluster(&model.embedding, &hdbscan::HdbscanConfig::default())?;
//! println!("{} clusters", clustering.labels.n_clusters());
//! # Ok(())
//! # }
//! ```

pub mod explain;
pub mod hdbscan;
pub mod ingest;
pub mod metrics;
pub mod neighbors;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod umap;

pub use ingest::{AdmissionRecord, Cohort, VitalsSet};
pub use preprocess::{Feature, FeatureMatrix, ScalerParams};
