//! Per-cluster characterisation: summary tables, percent differences with
//! confidence intervals, ICD10 chapter heatmap, embedding overlays and
//! clinician sample packs.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hdbscan::ClusterLabels;
use crate::ingest::{format_timestamp, summarize_entries, Cohort, CohortEntry, SummaryTable};
use crate::rng;
use crate::stats::MeanSd;
use crate::umap::Embedding2D;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("admission `{0}` has no cluster label")]
    MissingLabel(String),
    #[error("admission `{0}` has no embedding coordinates")]
    MissingCoordinates(String),
}

/// Looks up each cohort admission's label by id.
fn labels_for(cohort: &Cohort, labels: &ClusterLabels) -> Result<Vec<i32>, ReportError> {
    let map: HashMap<&str, i32> = labels.row_ids.iter().map(String::as_str).zip(labels.labels.iter().copied()).collect();
    cohort
        .records
        .iter()
        .map(|e| {
            let id = e.admission.admission_id.as_str();
            map.get(id).copied().ok_or_else(|| ReportError::MissingLabel(id.to_string()))
        })
        .collect()
}

fn coords_for(cohort: &Cohort, embedding: &Embedding2D) -> Result<Vec<[f64; 2]>, ReportError> {
    let map: HashMap<&str, [f64; 2]> = embedding.row_ids.iter().map(String::as_str).zip(embedding.coords.iter().copied()).collect();
    cohort
        .records
        .iter()
        .map(|e| {
            let id = e.admission.admission_id.as_str();
            map.get(id).copied().ok_or_else(|| ReportError::MissingCoordinates(id.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: i32,
    pub noise: bool,
    pub table: SummaryTable,
    /// Most frequent primary code; ties go to the lexicographically smallest.
    pub top_icd10: Option<String>,
}

fn most_frequent_code(entries: &[&CohortEntry]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in entries {
        *counts.entry(e.admission.icd10_primary.as_str()).or_default() += 1;
    }
    // BTreeMap iterates lexicographically, so the first maximum wins ties
    let mut best: Option<(&str, usize)> = None;
    for (code, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((code, c));
        }
    }
    best.map(|(c, _)| c.to_string())
}

/// One summary per cluster in label order, then a `noise` row if any.
pub fn summarize_clusters(cohort: &Cohort, labels: &ClusterLabels) -> Result<Vec<ClusterSummary>, ReportError> {
    let per_row = labels_for(cohort, labels)?;
    let mut groups: BTreeMap<i32, Vec<&CohortEntry>> = BTreeMap::new();
    for (e, &l) in cohort.records.iter().zip(&per_row) {
        groups.entry(l).or_default().push(e);
    }
    let mut out: Vec<ClusterSummary> = groups
        .iter()
        .filter(|(&l, _)| l >= 0)
        .map(|(&l, members)| ClusterSummary {
            cluster: l,
            noise: false,
            table: summarize_entries(members.iter().copied()),
            top_icd10: most_frequent_code(members),
        })
        .collect();
    if let Some(members) = groups.get(&-1) {
        out.push(ClusterSummary {
            cluster: -1,
            noise: true,
            table: summarize_entries(members.iter().copied()),
            top_icd10: most_frequent_code(members),
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: std::io::Write>(summaries: &[ClusterSummary], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "cluster",
        "noise",
        "n_patients",
        "n_admissions",
        "pct_female",
        "mortality_pct",
        "pct_limited_consciousness",
        "top_icd10",
    ];
    let measures = ["age", "los_hours", "news", "temperature", "sbp", "heart_rate", "sats", "resp_rate"];
    let cols: Vec<String> = measures.iter().flat_map(|m| [format!("{m}_mean"), format!("{m}_sd")]).collect();
    header.extend(cols.iter().map(String::as_str));
    w.write_record(&header)?;
    for s in summaries {
        let t = &s.table;
        let mut rec = vec![
            s.cluster.to_string(),
            s.noise.to_string(),
            t.n_patients.to_string(),
            t.n_admissions.to_string(),
            t.pct_female.to_string(),
            t.mortality_pct.to_string(),
            t.pct_limited_consciousness.to_string(),
            s.top_icd10.clone().unwrap_or_default(),
        ];
        for ms in [&t.age, &t.los_hours, &t.news, &t.temperature, &t.sbp, &t.heart_rate, &t.sats, &t.resp_rate] {
            rec.push(ms.mean.to_string());
            rec.push(ms.sd.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Measures compared against the population in the percent-difference chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    News,
    Temperature,
    Sbp,
    HeartRate,
    Sats,
    RespRate,
    Consciousness,
    LosHours,
}

impl Measure {
    pub const ALL: [Measure; 8] = [
        Measure::News,
        Measure::Temperature,
        Measure::Sbp,
        Measure::HeartRate,
        Measure::Sats,
        Measure::RespRate,
        Measure::Consciousness,
        Measure::LosHours,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::News => "news",
            Measure::Temperature => "temperature",
            Measure::Sbp => "sbp",
            Measure::HeartRate => "heart_rate",
            Measure::Sats => "sats",
            Measure::RespRate => "resp_rate",
            Measure::Consciousness => "consciousness",
            Measure::LosHours => "los_hours",
        }
    }

    /// `None` when the admission has no value (NEWS may be absent).
    pub fn value(self, e: &CohortEntry) -> Option<f64> {
        let v = &e.vitals;
        Some(match self {
            Measure::News => return e.admission.news.map(f64::from),
            Measure::Temperature => v.temperature,
            Measure::Sbp => v.sbp,
            Measure::HeartRate => v.heart_rate,
            Measure::Sats => v.sats,
            Measure::RespRate => v.resp_rate,
            Measure::Consciousness => f64::from(u8::from(v.consciousness.is_limited())),
            Measure::LosHours => e.admission.stay_hours(),
        })
    }

    pub fn is_binary(self) -> bool {
        self == Measure::Consciousness
    }
}

/// Binary measures with a population share below this are flagged.
pub const RARE_EVENT_SHARE: f64 = 0.05;
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CiMethod {
    /// `1.96 * sd / sqrt(n)`, scaled like the difference.
    #[default]
    Normal,
    /// Percentile bootstrap of the cluster mean; half the 95% interval width.
    Bootstrap { resamples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentDiffRow {
    pub cluster: i32,
    pub measure: Option<Measure>,
    pub n: usize,
    pub cluster_mean: f64,
    pub population_mean: f64,
    /// `None` when the population mean is zero.
    pub percent_diff: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub rare_event: bool,
}

impl PercentDiffRow {
    pub fn undefined(&self) -> bool {
        self.percent_diff.is_none()
    }
}

/// `100 (m_c - m_p) / |m_p|` with a normal-approximation 95% half-width
/// `100 * 1.96 * (sd_c / sqrt(n_c)) / |m_p|`.
pub fn percent_diff_ci(cluster_values: &[f64], population_mean: f64, population_n: usize) -> PercentDiffRow {
    percent_diff_with(cluster_values, population_mean, population_n, CiMethod::Normal)
}

pub fn percent_diff_with(cluster_values: &[f64], population_mean: f64, _population_n: usize, method: CiMethod) -> PercentDiffRow {
    let ms = MeanSd::from_slice(cluster_values);
    let defined = population_mean != 0.0 && population_mean.is_finite() && ms.n > 0;
    let scale = 100.0 / population_mean.abs();
    let half_width = match method {
        CiMethod::Normal => Z_95 * ms.sd / (ms.n as f64).sqrt(),
        CiMethod::Bootstrap { resamples, seed } => bootstrap_half_width(cluster_values, resamples, seed),
    };
    PercentDiffRow {
        cluster: 0,
        measure: None,
        n: ms.n,
        cluster_mean: ms.mean,
        population_mean,
        percent_diff: defined.then(|| scale * (ms.mean - population_mean)),
        ci_half_width: defined.then(|| scale * half_width),
        rare_event: false,
    }
}

fn bootstrap_half_width(values: &[f64], resamples: usize, seed: u64) -> f64 {
    if values.is_empty() || resamples == 0 {
        return f64::NAN;
    }
    let mut r = rng::stream(seed, 0);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[r.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    0.5 * (q(0.975) - q(0.025))
}

/// Every cluster (noise excluded) against the whole-cohort mean of every
/// measure.
pub fn percent_diff_table(cohort: &Cohort, labels: &ClusterLabels, method: CiMethod) -> Result<Vec<PercentDiffRow>, ReportError> {
    let per_row = labels_for(cohort, labels)?;
    let clusters: Vec<i32> = {
        let mut c: Vec<i32> = per_row.iter().copied().filter(|&l| l >= 0).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut rows = Vec::new();
    for m in Measure::ALL {
        let all: Vec<f64> = cohort.records.iter().filter_map(|e| m.value(e)).collect();
        let pop = MeanSd::from_slice(&all);
        let rare = m.is_binary() && pop.mean < RARE_EVENT_SHARE;
        for &c in &clusters {
            let vals: Vec<f64> = cohort
                .records
                .iter()
                .zip(&per_row)
                .filter(|(_, &l)| l == c)
                .filter_map(|(e, _)| m.value(e))
                .collect();
            let mut row = percent_diff_with(&vals, pop.mean, pop.n, method);
            row.cluster = c;
            row.measure = Some(m);
            row.rare_event = rare;
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_percent_diff_csv<W: std::io::Write>(rows: &[PercentDiffRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster", "measure", "n", "cluster_mean", "population_mean", "percent_diff", "ci_half_width", "rare_event", "undefined"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([
            r.cluster.to_string(),
            r.measure.map_or("", |m| m.name()).to_string(),
            r.n.to_string(),
            r.cluster_mean.to_string(),
            r.population_mean.to_string(),
            opt(r.percent_diff),
            opt(r.ci_half_width),
            r.rare_event.to_string(),
            r.undefined().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// ICD10 chapter groups shown on the heatmap, plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Icd10Group {
    Infectious,
    Neoplasms,
    Neuropsychiatric,
    Nervous,
    Circulatory,
    Respiratory,
    Digestive,
    Musculoskeletal,
    Pregnancy,
    NotElsewhereClassified,
    Injury,
    Other,
}

impl Icd10Group {
    pub const ALL: [Icd10Group; 12] = [
        Icd10Group::Infectious,
        Icd10Group::Neoplasms,
        Icd10Group::Neuropsychiatric,
        Icd10Group::Nervous,
        Icd10Group::Circulatory,
        Icd10Group::Respiratory,
        Icd10Group::Digestive,
        Icd10Group::Musculoskeletal,
        Icd10Group::Pregnancy,
        Icd10Group::NotElsewhereClassified,
        Icd10Group::Injury,
        Icd10Group::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Icd10Group::Infectious => "Infectious/parasitic (A00-B99)",
            Icd10Group::Neoplasms => "Neoplasms (C00-D49)",
            Icd10Group::Neuropsychiatric => "Neuropsychiatric (F01-F99)",
            Icd10Group::Nervous => "Nervous system (G00-G99)",
            Icd10Group::Circulatory => "Circulatory system (I00-I99)",
            Icd10Group::Respiratory => "Respiratory system (J00-J99)",
            Icd10Group::Digestive => "Digestive system (K00-K95)",
            Icd10Group::Musculoskeletal => "MSK (M00-M99)",
            Icd10Group::Pregnancy => "Pregnancy (O00-O9A)",
            Icd10Group::NotElsewhereClassified => "Not elsewhere classified (R00-R99)",
            Icd10Group::Injury => "Injury (S00-T88)",
            Icd10Group::Other => "Other",
        }
    }
}

/// Chapter group of a code by leading letter and two-digit category.
/// Codes that do not start with a letter and two digits map to `None`.
pub fn icd10_group(code: &str) -> Option<Icd10Group> {
    let b = code.trim().as_bytes();
    if b.len() < 3 || !b[0].is_ascii_alphabetic() {
        return None;
    }
    let letter = b[0].to_ascii_uppercase();
    if letter == b'O' {
        // O00-O9A: the category may end in a letter
        return b[1].is_ascii_digit().then_some(Icd10Group::Pregnancy);
    }
    if !(b[1].is_ascii_digit() && b[2].is_ascii_digit()) {
        return None;
    }
    let num = u32::from(b[1] - b'0') * 10 + u32::from(b[2] - b'0');
    use Icd10Group::*;
    Some(match (letter, num) {
        (b'A' | b'B', _) => Infectious,
        (b'C', _) | (b'D', 0..=49) => Neoplasms,
        (b'F', 1..=99) => Neuropsychiatric,
        (b'G', _) => Nervous,
        (b'I', _) => Circulatory,
        (b'J', _) => Respiratory,
        (b'K', 0..=95) => Digestive,
        (b'M', _) => Musculoskeletal,
        (b'R', _) => NotElsewhereClassified,
        (b'S', _) | (b'T', 0..=88) => Injury,
        _ => Other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Icd10Heatmap {
    pub threshold: f64,
    pub groups: Vec<Icd10Group>,
    pub clusters: Vec<i32>,
    /// `cells[g][c]`: percent of cluster `c` admissions in group `g`.
    pub cells: Vec<Vec<f64>>,
    /// Group has `>= threshold` percent in at least one cluster.
    pub retained: Vec<bool>,
}

impl Icd10Heatmap {
    pub fn retained_groups(&self) -> Vec<Icd10Group> {
        self.groups.iter().zip(&self.retained).filter(|(_, &r)| r).map(|(g, _)| *g).collect()
    }
}

pub fn icd10_heatmap(cohort: &Cohort, labels: &ClusterLabels, threshold: f64) -> Result<Icd10Heatmap, ReportError> {
    let per_row = labels_for(cohort, labels)?;
    let mut clusters: Vec<i32> = per_row.iter().copied().filter(|&l| l >= 0).collect();
    clusters.sort_unstable();
    clusters.dedup();
    let col: HashMap<i32, usize> = clusters.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let mut counts = vec![vec![0usize; clusters.len()]; Icd10Group::ALL.len()];
    let mut totals = vec![0usize; clusters.len()];
    let mut unparsed = 0;
    for (e, l) in cohort.records.iter().zip(&per_row) {
        let Some(&k) = col.get(l) else { continue };
        let g = icd10_group(&e.admission.icd10_primary).unwrap_or_else(|| {
            unparsed += 1;
            Icd10Group::Other
        });
        counts[g as usize][k] += 1;
        totals[k] += 1;
    }
    if unparsed > 0 {
        warn!("{unparsed} ICD10 codes could not be parsed and were counted as other");
    }
    let cells: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().zip(&totals).map(|(&c, &t)| if t == 0 { 0.0 } else { 100.0 * c as f64 / t as f64 }).collect())
        .collect();
    let retained = cells.iter().map(|row| row.iter().any(|&p| p >= threshold)).collect();
    Ok(Icd10Heatmap { threshold, groups: Icd10Group::ALL.to_vec(), clusters, cells, retained })
}

pub fn write_heatmap_csv<W: std::io::Write>(h: &Icd10Heatmap, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["group".to_string(), "retained".to_string()];
    header.extend(h.clusters.iter().map(|c| format!("cluster_{c}")));
    w.write_record(&header)?;
    for ((g, row), r) in h.groups.iter().zip(&h.cells).zip(&h.retained) {
        let mut rec = vec![g.label().to_string(), r.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per admission with everything the embedding panels are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub admission_id: String,
    pub x: f64,
    pub y: f64,
    pub cluster: i32,
    pub gender: String,
    pub age: u32,
    pub news: Option<u8>,
    pub temperature: f64,
    pub sbp: f64,
    pub heart_rate: f64,
    pub sats: f64,
    pub resp_rate: f64,
    pub consciousness: String,
}

pub const OVERLAY_COLUMNS: [&str; 13] = [
    "admission_id",
    "x",
    "y",
    "cluster",
    "gender",
    "age",
    "news",
    "temperature",
    "sbp",
    "heart_rate",
    "sats",
    "resp_rate",
    "consciousness",
];

pub fn export_overlays(cohort: &Cohort, embedding: &Embedding2D, labels: &ClusterLabels) -> Result<Vec<OverlayRow>, ReportError> {
    let per_row = labels_for(cohort, labels)?;
    let coords = coords_for(cohort, embedding)?;
    Ok(cohort
        .records
        .iter()
        .zip(per_row)
        .zip(coords)
        .map(|((e, cluster), [x, y])| OverlayRow {
            admission_id: e.admission.admission_id.clone(),
            x,
            y,
            cluster,
            gender: e.admission.gender.to_string(),
            age: e.admission.age,
            news: e.admission.news,
            temperature: e.vitals.temperature,
            sbp: e.vitals.sbp,
            heart_rate: e.vitals.heart_rate,
            sats: e.vitals.sats,
            resp_rate: e.vitals.resp_rate,
            consciousness: e.vitals.consciousness.to_string(),
        })
        .collect())
}

pub fn write_overlays_csv<W: std::io::Write>(rows: &[OverlayRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(OVERLAY_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_overlays_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<OverlayRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledAdmission {
    pub admission_id: String,
    pub patient_id: String,
    pub gender: String,
    pub age: u32,
    pub admit_ts: String,
    pub discharge_ts: String,
    pub outcome: String,
    pub icd10_primary: String,
    pub news: Option<u8>,
    pub vitals_ts: String,
    pub temperature: f64,
    pub sbp: f64,
    pub heart_rate: f64,
    pub sats: f64,
    pub resp_rate: f64,
    pub consciousness: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSamplePack {
    pub cluster: i32,
    pub seed: u64,
    pub requested: usize,
    pub summary: ClusterSummary,
    pub warning: Option<String>,
    pub admissions: Vec<SampledAdmission>,
}

/// Uniform sampling without replacement of `per_cluster` admissions from
/// each cluster. Members are ordered by admission id before drawing, so the
/// packs do not depend on cohort row order.
pub fn sample_for_clinicians(
    cohort: &Cohort,
    labels: &ClusterLabels,
    embedding: &Embedding2D,
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<ClinicalSamplePack>, ReportError> {
    let per_row = labels_for(cohort, labels)?;
    let coords = coords_for(cohort, embedding)?;
    let summaries = summarize_clusters(cohort, labels)?;
    let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in per_row.iter().enumerate() {
        if l >= 0 {
            members.entry(l).or_default().push(i);
        }
    }
    let mut packs = Vec::new();
    for (cluster, mut idx) in members {
        idx.sort_by(|&a, &b| cohort.records[a].admission.admission_id.cmp(&cohort.records[b].admission.admission_id));
        let mut warning = None;
        let chosen: Vec<usize> = if idx.len() <= per_cluster {
            if idx.len() < per_cluster {
                let msg = format!("cluster {cluster} has {} members, fewer than {per_cluster}; returning all", idx.len());
                warn!("{msg}");
                warning = Some(msg);
            }
            idx.clone()
        } else {
            let mut r = rng::stream(seed, cluster as u64);
            let mut pick: Vec<usize> = index::sample(&mut r, idx.len(), per_cluster).into_iter().map(|k| idx[k]).collect();
            pick.sort_by(|&a, &b| cohort.records[a].admission.admission_id.cmp(&cohort.records[b].admission.admission_id));
            pick
        };
        let admissions = chosen
            .iter()
            .map(|&i| {
                let e = &cohort.records[i];
                let a = &e.admission;
                SampledAdmission {
                    admission_id: a.admission_id.clone(),
                    patient_id: a.patient_id.clone(),
                    gender: a.gender.to_string(),
                    age: a.age,
                    admit_ts: format_timestamp(a.admit_ts),
                    discharge_ts: format_timestamp(a.discharge_ts),
                    outcome: a.outcome.to_string(),
                    icd10_primary: a.icd10_primary.clone(),
                    news: a.news,
                    vitals_ts: format_timestamp(e.vitals.ts),
                    temperature: e.vitals.temperature,
                    sbp: e.vitals.sbp,
                    heart_rate: e.vitals.heart_rate,
                    sats: e.vitals.sats,
                    resp_rate: e.vitals.resp_rate,
                    consciousness: e.vitals.consciousness.to_string(),
                    x: coords[i][0],
                    y: coords[i][1],
                }
            })
            .collect();
        let summary = summaries.iter().find(|s| s.cluster == cluster).cloned().expect("summary for every cluster");
        packs.push(ClinicalSamplePack { cluster, seed, requested: per_cluster, summary, warning, admissions });
    }
    Ok(packs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Consciousness, FilterLog, Outcome};
    use crate::preprocess::tests::entry;

    fn cohort(entries: Vec<CohortEntry>) -> Cohort {
        Cohort { records: entries, filter_log: FilterLog::default() }
    }

    fn labelled(c: &Cohort, labels: Vec<i32>) -> ClusterLabels {
        ClusterLabels { row_ids: c.admission_ids(), labels }
    }

    #[test]
    fn percent_diff_arithmetic() {
        let same = percent_diff_ci(&[3.0, 5.0], 4.0, 100);
        assert_eq!(same.percent_diff, Some(0.0));
        let news = percent_diff_ci(&[5.78], 1.53, 100);
        assert!((news.percent_diff.unwrap() - 277.777_777).abs() < 1e-3);
        // values 8, 8, 12, 12: mean 10, population sd 2, n = 4
        let ci = percent_diff_ci(&[8.0, 8.0, 12.0, 12.0], 10.0, 100);
        assert!((ci.ci_half_width.unwrap() - 19.6).abs() < 1e-9);
        assert!(percent_diff_ci(&[1.0], 0.0, 10).undefined());
    }

    #[test]
    fn icd10_groups() {
        assert_eq!(icd10_group("A41.9"), Some(Icd10Group::Infectious));
        assert_eq!(icd10_group("I251"), Some(Icd10Group::Circulatory));
        assert_eq!(icd10_group("R10.3"), Some(Icd10Group::NotElsewhereClassified));
        assert_eq!(icd10_group("O9A.1"), Some(Icd10Group::Pregnancy));
        assert_eq!(icd10_group("D50"), Some(Icd10Group::Other));
        assert_eq!(icd10_group("T89"), Some(Icd10Group::Other));
        assert_eq!(icd10_group("K96"), Some(Icd10Group::Other));
        assert_eq!(icd10_group("F00"), Some(Icd10Group::Other));
        assert_eq!(icd10_group("99"), None);
    }

    #[test]
    fn two_admissions_one_death() {
        let mut a = entry("a", 37.0, 120.0, 80.0, 97.0, 16.0, false);
        let b = entry("b", 37.0, 120.0, 80.0, 97.0, 16.0, false);
        a.admission.outcome = Outcome::Died;
        let c = cohort(vec![a, b]);
        let s = summarize_clusters(&c, &labelled(&c, vec![0, 0])).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].table.mortality_pct, 50.0);
        assert_eq!(s[0].table, crate::ingest::cohort_summary(&c));
    }

    #[test]
    fn heatmap_boundary_retained() {
        // 50 admissions in one cluster, exactly one respiratory code = 2.0%
        let entries: Vec<CohortEntry> = (0..50)
            .map(|i| {
                let mut e = entry(&format!("a{i:02}"), 37.0, 120.0, 80.0, 97.0, 16.0, false);
                e.admission.icd10_primary = if i == 0 { "J18.9".into() } else { "I251".into() };
                e
            })
            .collect();
        let c = cohort(entries);
        let l = labelled(&c, vec![0; 50]);
        let h = icd10_heatmap(&c, &l, 2.0).unwrap();
        assert!(h.retained_groups().contains(&Icd10Group::Respiratory));
        let h = icd10_heatmap(&c, &l, 2.5).unwrap();
        assert!(!h.retained_groups().contains(&Icd10Group::Respiratory));
    }

    #[test]
    fn small_cluster_sample_pack() {
        let entries: Vec<CohortEntry> =
            (0..7).map(|i| entry(&format!("a{i}"), 37.0, 120.0, 80.0, 97.0, 16.0, i == 0)).collect();
        let c = cohort(entries);
        let l = labelled(&c, vec![0; 7]);
        let e = Embedding2D { row_ids: c.admission_ids(), coords: vec![[0.0, 0.0]; 7] };
        let packs = sample_for_clinicians(&c, &l, &e, 10, 1).unwrap();
        assert_eq!(packs[0].admissions.len(), 7);
        assert!(packs[0].warning.is_some());
        assert_eq!(packs[0].admissions[0].consciousness, Consciousness::Limited.to_string());
    }
}
