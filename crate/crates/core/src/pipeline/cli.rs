//! Command-line front end. Flags override the config file, which overrides
//! the built-in defaults.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::{all_stages, run_stages, PipelineConfig, PipelineError, Stage};

#[derive(Debug, Parser)]
#[command(name = "subtype-pipeline", version, about = "Vitals-based patient subtyping pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with planted subtypes
    Synth,
    /// Parse inputs and apply the cohort filters
    Ingest,
    /// Preprocess vitals and compute the 2-D embedding
    Embed,
    /// Density-cluster the embedding
    Cluster,
    /// Fit surrogate trees and feature importances per cluster
    Explain,
    /// Write summary tables, heatmap, overlays and sample packs
    Report,
    /// Run every stage in order
    All,
    /// Print the effective configuration as TOML
    Config,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives the deterministic single-thread schedule
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, env = "PIPELINE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub admissions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vitals: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n_admissions: Option<usize>,
    #[arg(long, global = true)]
    pub n_neighbors: Option<usize>,
    #[arg(long, global = true)]
    pub min_dist: Option<f64>,
    #[arg(long, global = true)]
    pub min_cluster_size: Option<usize>,
    #[arg(long, global = true)]
    pub n_samples: Option<usize>,
    /// ICD10 heatmap threshold in percent
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
}

impl Overrides {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.out {
            cfg.paths.out = v.clone();
        }
        if let Some(v) = &self.admissions {
            cfg.paths.admissions = Some(v.clone());
        }
        if let Some(v) = &self.vitals {
            cfg.paths.vitals = Some(v.clone());
        }
        if let Some(v) = self.n_admissions {
            cfg.synth.n_admissions = v;
        }
        if let Some(v) = self.n_neighbors {
            cfg.umap.n_neighbors = v;
        }
        if let Some(v) = self.min_dist {
            cfg.umap.min_dist = v;
        }
        if let Some(v) = self.min_cluster_size {
            cfg.hdbscan.min_cluster_size = Some(v);
        }
        if let Some(v) = self.n_samples {
            cfg.explain.n_samples = v;
        }
        if let Some(v) = self.threshold {
            cfg.report.threshold = v;
        }
        Ok(cfg)
    }
}

fn stages(command: Command, cfg: &PipelineConfig) -> Vec<Stage> {
    match command {
        Command::Synth => vec![Stage::Synth],
        Command::Ingest => vec![Stage::Ingest],
        Command::Embed => vec![Stage::Embed],
        Command::Cluster => vec![Stage::Cluster],
        Command::Explain => vec![Stage::Explain],
        Command::Report => vec![Stage::Report],
        Command::All => all_stages(cfg),
        Command::Config => Vec::new(),
    }
}

pub fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = cli.overrides.resolve()?;
    cfg.validate()?;
    if cli.command == Command::Config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    for (stage, secs) in run_stages(&stages(cli.command, &cfg), &cfg)? {
        eprintln!("{:<8} done in {secs:.2}s", stage.name());
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit status. Failures are
/// printed to stderr as one JSON object.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}
