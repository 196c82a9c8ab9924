//! Defect injection for exercising the ingest filters.
//!
//! Two kinds of defect go to disjoint sets of admissions: stays cut below
//! two hours, and vitals rows with one field blanked. With one vitals set per
//! admission each defect excludes exactly one admission under exactly one
//! filter rule, so the manifest predicts the filter log.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{into_string, CohortFiles, SynthError};
use crate::ingest::{format_timestamp, parse_timestamp, FilterLog, VITALS_HEADER};
use crate::rng;

/// Shortened stays last between 15 minutes and 1.9 hours.
const SHORT_STAY_SECS: std::ops::Range<i64> = 900..6_840;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectAmount {
    /// Fraction of admissions in `[0, 1)`, rounded to the nearest count.
    Rate(f64),
    Count(usize),
}

impl DefectAmount {
    fn resolve(self, n: usize, field: &str) -> Result<usize, SynthError> {
        match self {
            DefectAmount::Count(k) => Ok(k),
            DefectAmount::Rate(r) if (0.0..1.0).contains(&r) => Ok((r * n as f64).round() as usize),
            DefectAmount::Rate(r) => Err(super::invalid(field, format!("rate {r} outside [0, 1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    pub missing: DefectAmount,
    pub short_stay: DefectAmount,
}

impl DegradeSpec {
    pub fn rates(missing: f64, short_stay: f64) -> Self {
        Self { missing: DefectAmount::Rate(missing), short_stay: DefectAmount::Rate(short_stay) }
    }

    pub fn counts(missing: usize, short_stay: usize) -> Self {
        Self { missing: DefectAmount::Count(missing), short_stay: DefectAmount::Count(short_stay) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingVital {
    pub admission_id: String,
    pub field: String,
}

/// Every injected defect, in admission-file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradeManifest {
    pub short_stay: Vec<String>,
    pub missing_vitals: Vec<MissingVital>,
}

impl DegradeManifest {
    pub fn total(&self) -> usize {
        self.short_stay.len() + self.missing_vitals.len()
    }

    /// The filter log ingest should report for the degraded files, assuming
    /// the clean input had no exclusions.
    pub fn expected_filter_log(&self) -> FilterLog {
        FilterLog { short_stay: self.short_stay.len(), no_vitals_24h: self.missing_vitals.len() }
    }
}

fn read_all(text: &str) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), SynthError> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let rows = r.records().collect::<Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn write_all(header: &csv::StringRecord, rows: &[csv::StringRecord]) -> Result<String, SynthError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    into_string(w)
}

fn replace(rec: &csv::StringRecord, col: usize, value: &str) -> csv::StringRecord {
    rec.iter().enumerate().map(|(i, f)| if i == col { value } else { f }).collect()
}

/// Returns degraded copies of the admission and vitals files together with
/// the manifest. Zero defects return the input unchanged.
pub fn degrade_cohort(
    files: &CohortFiles,
    spec: &DegradeSpec,
    seed: u64,
) -> Result<(CohortFiles, DegradeManifest), SynthError> {
    let (adm_header, mut admissions) = read_all(&files.admissions_csv)?;
    let n = admissions.len();
    let k_missing = spec.missing.resolve(n, "missing")?;
    let k_short = spec.short_stay.resolve(n, "short_stay")?;
    if k_missing + k_short > n {
        return Err(SynthError::TooManyDefects { requested: k_missing + k_short, available: n });
    }
    if k_missing + k_short == 0 {
        return Ok((files.clone(), DegradeManifest::default()));
    }

    let (vit_header, mut vitals) = read_all(&files.vitals_csv)?;
    let mut rows_of: HashMap<String, Vec<usize>> = HashMap::new();
    for (j, v) in vitals.iter().enumerate() {
        rows_of.entry(v.get(0).unwrap_or_default().to_string()).or_default().push(j);
    }

    let mut r = rng::stream(rng::derive_seed(seed, "degrade"), 0);
    let chosen = sample(&mut r, n, k_short + k_missing).into_vec();
    let mut kind = vec![None; n];
    for (pos, &i) in chosen.iter().enumerate() {
        kind[i] = Some(pos < k_short);
    }

    let mut manifest = DegradeManifest::default();
    for (i, k) in kind.iter().enumerate() {
        let Some(short) = *k else { continue };
        let id = admissions[i].get(0).unwrap_or_default().to_string();
        if short {
            let admit = parse_timestamp(admissions[i].get(4).unwrap_or_default())
                .ok_or_else(|| super::invalid("admissions", format!("bad admit_ts for {id}")))?;
            let discharge = admit + r.random_range(SHORT_STAY_SECS);
            admissions[i] = replace(&admissions[i], 5, &format_timestamp(discharge));
            manifest.short_stay.push(id);
        } else {
            let col = r.random_range(2..=7);
            for &j in rows_of.get(&id).map(Vec::as_slice).unwrap_or_default() {
                vitals[j] = replace(&vitals[j], col, "");
            }
            manifest.missing_vitals.push(MissingVital { admission_id: id, field: VITALS_HEADER[col].to_string() });
        }
    }

    let degraded = CohortFiles {
        admissions_csv: write_all(&adm_header, &admissions)?,
        vitals_csv: write_all(&vit_header, &vitals)?,
        planted_labels_csv: files.planted_labels_csv.clone(),
    };
    Ok((degraded, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_cohort, parse_admissions, RejectReason};
    use crate::synth::{default_paper_spec, generate_cohort};

    fn clean(n: usize) -> CohortFiles {
        generate_cohort(&default_paper_spec().with_n(n)).unwrap()
    }

    #[test]
    fn zero_rates_are_identity() {
        let files = clean(300);
        let (out, m) = degrade_cohort(&files, &DegradeSpec::rates(0.0, 0.0), 9).unwrap();
        assert_eq!(out, files);
        assert_eq!(m.total(), 0);
    }

    #[test]
    fn manifest_matches_filter_log() {
        let files = clean(1000);
        let (out, m) = degrade_cohort(&files, &DegradeSpec::rates(0.07, 0.11), 5).unwrap();
        assert_eq!((m.missing_vitals.len(), m.short_stay.len()), (70, 110));
        let parsed = parse_admissions(out.admissions_csv.as_bytes(), out.vitals_csv.as_bytes()).unwrap();
        assert_eq!(parsed.rejects.len(), 70);
        assert!(parsed.rejects.iter().all(|r| r.reason == RejectReason::IncompleteVitals));
        let cohort = filter_cohort(&parsed.admissions, &parsed.vitals).unwrap();
        assert_eq!(cohort.filter_log, m.expected_filter_log());
        assert_eq!(cohort.len(), 1000 - 180);
    }

    #[test]
    fn seeded_determinism() {
        let files = clean(200);
        let spec = DegradeSpec::counts(10, 10);
        assert_eq!(degrade_cohort(&files, &spec, 1).unwrap(), degrade_cohort(&files, &spec, 1).unwrap());
        assert_ne!(degrade_cohort(&files, &spec, 1).unwrap().1, degrade_cohort(&files, &spec, 2).unwrap().1);
    }

    #[test]
    fn rejects_bad_rates_and_excess_counts() {
        let files = clean(20);
        assert!(degrade_cohort(&files, &DegradeSpec::rates(1.0, 0.0), 0).is_err());
        assert!(matches!(
            degrade_cohort(&files, &DegradeSpec::counts(15, 6), 0),
            Err(SynthError::TooManyDefects { requested: 21, available: 20 })
        ));
    }
}
