use std::path::Path;
use std::process::{Command, Output};

use subtype_core::pipeline::PipelineConfig;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subtype-pipeline"))
        .args(args)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1", "--n-admissions", "400", "--n-samples", "2000"])
        .output()
        .unwrap()
}

fn stderr_record(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

#[test]
fn report_before_cluster_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["synth", "ingest", "embed"] {
        assert_eq!(run(dir.path(), &[stage]).status.code(), Some(0), "{stage}");
    }
    let o = run(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    let rec = stderr_record(&o);
    assert!(rec.to_string().contains("clusters"), "{rec}");
}

#[test]
fn ingest_on_empty_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["ingest"]).status.code(), Some(2));
}

#[test]
fn config_violations_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["all", "--min-dist", "-1"]).status.code(), Some(3));
    assert_eq!(run(dir.path(), &["all", "--seed", "many"]).status.code(), Some(3));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nunknown_key = 2\n").unwrap();
    let o = run(dir.path(), &["all", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    stderr_record(&o);
}

#[test]
fn config_command_prints_round_trippable_toml() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["config", "--seed", "17", "--min-cluster-size", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = PipelineConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 17);
    assert_eq!(cfg.hdbscan.min_cluster_size, Some(9));
    assert_eq!(cfg.synth.n_admissions, 400);
}

#[test]
fn all_writes_every_stage_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["all"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    for stage in ["synth", "ingest", "embed", "cluster", "explain", "report"] {
        assert!(manifest["stages"][stage]["config_hash"].is_string(), "{stage}");
    }
    for f in ["cohort/filter_log.json", "embedding/embedding.csv", "clusters/labels.csv", "explanations/importance.json", "report/percent_diff.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}
