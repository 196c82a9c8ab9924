//! Admission / vitals ingestion and cohort inclusion rules.
//!
//! Two comma-separated inputs are read:
//!
//! * `admissions.csv`: `admission_id,patient_id,gender,age,admit_ts,discharge_ts,outcome,icd10_primary`
//! * `vitals.csv`: `admission_id,ts,temperature,sbp,heart_rate,sats,resp_rate,consciousness,news`
//!
//! Timestamps are ISO-8601 UTC. Malformed rows are rejected individually with
//! a line number and reason; a missing header or a duplicated admission id is
//! fatal. An admission enters the cohort iff its stay lasts at least two hours
//! and it has a complete vitals set within 24 hours of admission. The earliest
//! such set (file order on equal timestamps) becomes the admission's first set
//! of readings. Re-admissions of the same patient are independent rows.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{percent_true, MeanSd};

pub const ADMISSIONS_HEADER: [&str; 8] = [
    "admission_id",
    "patient_id",
    "gender",
    "age",
    "admit_ts",
    "discharge_ts",
    "outcome",
    "icd10_primary",
];

pub const VITALS_HEADER: [&str; 9] = [
    "admission_id",
    "ts",
    "temperature",
    "sbp",
    "heart_rate",
    "sats",
    "resp_rate",
    "consciousness",
    "news",
];

/// Minimum stay retained; shorter visits are routine appointments.
pub const MIN_STAY_SECS: i64 = 2 * 3600;
/// Vitals must be taken within this window after admission.
pub const VITALS_WINDOW_SECS: i64 = 24 * 3600;

pub const TEMPERATURE_BOUNDS: (f64, f64) = (25.0, 45.0);
pub const SBP_BOUNDS: (f64, f64) = (30.0, 300.0);
pub const HEART_RATE_BOUNDS: (f64, f64) = (10.0, 300.0);
pub const SATS_BOUNDS: (f64, f64) = (0.0, 100.0);
pub const RESP_RATE_BOUNDS: (f64, f64) = (1.0, 90.0);
pub const NEWS_MAX: u8 = 20;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: missing or malformed header, expected `{expected}`")]
    MissingHeader { file: InputFile, expected: String },
    #[error("admissions line {line}: duplicate admission_id `{id}`")]
    DuplicateAdmission { id: String, line: u64 },
    #[error("no admissions survived cohort filtering: {}", serde_json::to_string(.filter_log).unwrap_or_default())]
    EmptyCohort { filter_log: FilterLog },
    #[error("cohort file line {line}: {reason}")]
    CohortFile { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFile {
    Admissions,
    Vitals,
}

impl fmt::Display for InputFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFile::Admissions => "admissions.csv",
            InputFile::Vitals => "vitals.csv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
    NK,
    NS,
}

impl FromStr for Gender {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "F" => Ok(Gender::F),
            "M" => Ok(Gender::M),
            "NK" => Ok(Gender::NK),
            "NS" => Ok(Gender::NS),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::F => "F",
            Gender::M => "M",
            Gender::NK => "NK",
            Gender::NS => "NS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Survived,
    Died,
}

impl FromStr for Outcome {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "survived" => Ok(Outcome::Survived),
            "died" => Ok(Outcome::Died),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Survived => "survived",
            Outcome::Died => "died",
        })
    }
}

/// Level of consciousness, collapsed to alert vs. anything less (C/V/P/U).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consciousness {
    Alert,
    Limited,
}

impl Consciousness {
    pub fn is_limited(self) -> bool {
        self == Consciousness::Limited
    }
}

impl FromStr for Consciousness {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "alert" => Ok(Consciousness::Alert),
            "limited" => Ok(Consciousness::Limited),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Consciousness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Consciousness::Alert => "alert",
            Consciousness::Limited => "limited",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub admission_id: String,
    pub patient_id: String,
    pub gender: Gender,
    pub age: u32,
    /// UTC seconds.
    pub admit_ts: i64,
    pub discharge_ts: i64,
    pub outcome: Outcome,
    pub icd10_primary: String,
    /// Taken from the attached first vitals set; absent before filtering.
    pub news: Option<u8>,
}

impl AdmissionRecord {
    pub fn stay_secs(&self) -> i64 {
        self.discharge_ts - self.admit_ts
    }

    pub fn stay_hours(&self) -> f64 {
        self.stay_secs() as f64 / 3600.0
    }

    pub fn died(&self) -> bool {
        self.outcome == Outcome::Died
    }
}

/// One complete, simultaneous reading of the six vitals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsSet {
    pub admission_id: String,
    pub ts: i64,
    pub temperature: f64,
    pub sbp: f64,
    pub heart_rate: f64,
    pub sats: f64,
    pub resp_rate: f64,
    pub consciousness: Consciousness,
    pub news: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    IncompleteVitals,
    NegativeStay,
    FieldCount { expected: usize, found: usize },
    Malformed { field: String, value: String },
    OutOfBounds { field: String, value: String },
    InvalidIcd10 { value: String },
    EmptyId,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::IncompleteVitals => f.write_str("incomplete vitals"),
            RejectReason::NegativeStay => f.write_str("negative stay"),
            RejectReason::FieldCount { expected, found } => {
                write!(f, "expected {expected} fields, found {found}")
            }
            RejectReason::Malformed { field, value } => write!(f, "malformed {field}: `{value}`"),
            RejectReason::OutOfBounds { field, value } => write!(f, "{field} out of bounds: {value}"),
            RejectReason::InvalidIcd10 { value } => write!(f, "invalid icd10 code `{value}`"),
            RejectReason::EmptyId => f.write_str("empty admission_id"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReject {
    pub file: InputFile,
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedInput {
    pub admissions: Vec<AdmissionRecord>,
    pub vitals: Vec<VitalsSet>,
    pub rejects: Vec<RowReject>,
}

/// Exclusion counts per cohort rule. Rule order is the order of the fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterLog {
    pub short_stay: usize,
    pub no_vitals_24h: usize,
}

impl FilterLog {
    pub fn total(&self) -> usize {
        self.short_stay + self.no_vitals_24h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub admission: AdmissionRecord,
    pub vitals: VitalsSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<CohortEntry>,
    pub filter_log: FilterLog,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn admission_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.admission.admission_id.clone()).collect()
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc).timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Letter, two digits, then an optional suffix of up to four alphanumerics,
/// optionally introduced by a dot: `A41.9`, `I251`, `R10.3`.
pub fn is_valid_icd10(code: &str) -> bool {
    let b = code.as_bytes();
    // O9A is the one category whose third character is a letter
    let third_ok = b.len() >= 3 && (b[2].is_ascii_digit() || &b[..3] == b"O9A");
    if b.len() < 3 || !b[0].is_ascii_uppercase() || !b[1].is_ascii_digit() || !third_ok {
        return false;
    }
    let rest = match &code[3..] {
        r if r.starts_with('.') => &r[1..],
        r => r,
    };
    if code[3..].starts_with('.') && rest.is_empty() {
        return false;
    }
    rest.len() <= 4 && rest.bytes().all(|c| c.is_ascii_alphanumeric())
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header(
    records: &mut csv::StringRecordsIter<'_, impl Read>,
    file: InputFile,
    expected: &[&str],
) -> Result<(), IngestError> {
    let missing = || IngestError::MissingHeader { file, expected: expected.join(",") };
    let header = records.next().ok_or_else(missing)??;
    if header.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(missing())
    }
}

fn malformed(field: &str, value: &str) -> RejectReason {
    RejectReason::Malformed { field: field.to_string(), value: value.to_string() }
}

fn parse_field<T: FromStr>(field: &str, value: &str) -> Result<T, RejectReason> {
    value.parse::<T>().map_err(|_| malformed(field, value))
}

fn parse_ts(field: &str, value: &str) -> Result<i64, RejectReason> {
    parse_timestamp(value).ok_or_else(|| malformed(field, value))
}

fn parse_vital(field: &str, value: &str, (lo, hi): (f64, f64)) -> Result<f64, RejectReason> {
    let v: f64 = parse_field(field, value)?;
    if !v.is_finite() {
        return Err(malformed(field, value));
    }
    if v < lo || v > hi {
        return Err(RejectReason::OutOfBounds { field: field.to_string(), value: value.to_string() });
    }
    Ok(v)
}

fn parse_news(value: &str) -> Result<Option<u8>, RejectReason> {
    if value.is_empty() {
        return Ok(None);
    }
    let v: u8 = parse_field("news", value)?;
    if v > NEWS_MAX {
        return Err(RejectReason::OutOfBounds { field: "news".into(), value: value.into() });
    }
    Ok(Some(v))
}

fn parse_admission_row(rec: &csv::StringRecord) -> Result<AdmissionRecord, RejectReason> {
    if rec.len() != ADMISSIONS_HEADER.len() {
        return Err(RejectReason::FieldCount { expected: ADMISSIONS_HEADER.len(), found: rec.len() });
    }
    let admission_id = rec[0].to_string();
    if admission_id.is_empty() {
        return Err(RejectReason::EmptyId);
    }
    let gender = rec[2].parse::<Gender>().map_err(|_| malformed("gender", &rec[2]))?;
    let age: u32 = parse_field("age", &rec[3])?;
    let admit_ts = parse_ts("admit_ts", &rec[4])?;
    let discharge_ts = parse_ts("discharge_ts", &rec[5])?;
    let outcome = rec[6].parse::<Outcome>().map_err(|_| malformed("outcome", &rec[6]))?;
    let icd10_primary = rec[7].to_string();
    if !is_valid_icd10(&icd10_primary) {
        return Err(RejectReason::InvalidIcd10 { value: icd10_primary });
    }
    if discharge_ts < admit_ts {
        return Err(RejectReason::NegativeStay);
    }
    Ok(AdmissionRecord {
        admission_id,
        patient_id: rec[1].to_string(),
        gender,
        age,
        admit_ts,
        discharge_ts,
        outcome,
        icd10_primary,
        news: None,
    })
}

fn parse_vitals_row(rec: &csv::StringRecord) -> Result<VitalsSet, RejectReason> {
    if rec.len() != VITALS_HEADER.len() {
        return Err(RejectReason::FieldCount { expected: VITALS_HEADER.len(), found: rec.len() });
    }
    if rec[0].is_empty() {
        return Err(RejectReason::EmptyId);
    }
    // A vitals set is complete by definition; no imputation.
    if (2..=7).any(|i| rec[i].is_empty()) {
        return Err(RejectReason::IncompleteVitals);
    }
    Ok(VitalsSet {
        admission_id: rec[0].to_string(),
        ts: parse_ts("ts", &rec[1])?,
        temperature: parse_vital("temperature", &rec[2], TEMPERATURE_BOUNDS)?,
        sbp: parse_vital("sbp", &rec[3], SBP_BOUNDS)?,
        heart_rate: parse_vital("heart_rate", &rec[4], HEART_RATE_BOUNDS)?,
        sats: parse_vital("sats", &rec[5], SATS_BOUNDS)?,
        resp_rate: parse_vital("resp_rate", &rec[6], RESP_RATE_BOUNDS)?,
        consciousness: rec[7]
            .parse::<Consciousness>()
            .map_err(|_| malformed("consciousness", &rec[7]))?,
        news: parse_news(&rec[8])?,
    })
}

/// Parses both input streams. Row-level problems are collected in
/// [`ParsedInput::rejects`]; only header and duplicate-id problems abort.
pub fn parse_admissions<A: Read, V: Read>(
    admissions: A,
    vitals: V,
) -> Result<ParsedInput, IngestError> {
    let mut out = ParsedInput::default();

    let mut reader = csv_reader(admissions);
    let mut records = reader.records();
    check_header(&mut records, InputFile::Admissions, &ADMISSIONS_HEADER)?;
    let mut seen: HashSet<String> = HashSet::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let id = rec.get(0).unwrap_or("");
        if !id.is_empty() && !seen.insert(id.to_string()) {
            return Err(IngestError::DuplicateAdmission { id: id.to_string(), line });
        }
        match parse_admission_row(&rec) {
            Ok(a) => out.admissions.push(a),
            Err(reason) => out.rejects.push(RowReject { file: InputFile::Admissions, line, reason }),
        }
    }

    let mut reader = csv_reader(vitals);
    let mut records = reader.records();
    check_header(&mut records, InputFile::Vitals, &VITALS_HEADER)?;
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match parse_vitals_row(&rec) {
            Ok(v) => out.vitals.push(v),
            Err(reason) => out.rejects.push(RowReject { file: InputFile::Vitals, line, reason }),
        }
    }
    Ok(out)
}

/// Applies the inclusion rules. Stay length is checked first, so an
/// admission failing both rules counts once, under `short_stay`.
pub fn filter_cohort(
    admissions: &[AdmissionRecord],
    vitals: &[VitalsSet],
) -> Result<Cohort, IngestError> {
    let mut by_admission: HashMap<&str, Vec<&VitalsSet>> = HashMap::new();
    for v in vitals {
        by_admission.entry(v.admission_id.as_str()).or_default().push(v);
    }

    let mut filter_log = FilterLog::default();
    let mut records = Vec::with_capacity(admissions.len());
    for adm in admissions {
        if adm.stay_secs() < MIN_STAY_SECS {
            filter_log.short_stay += 1;
            continue;
        }
        let window_end = adm.admit_ts + VITALS_WINDOW_SECS;
        let first = by_admission
            .get(adm.admission_id.as_str())
            .into_iter()
            .flatten()
            .filter(|v| v.ts >= adm.admit_ts && v.ts <= window_end)
            // min_by_key returns the first minimum, i.e. file order on ties
            .min_by_key(|v| v.ts);
        match first {
            Some(v) => {
                let mut admission = adm.clone();
                admission.news = v.news;
                records.push(CohortEntry { admission, vitals: (*v).clone() });
            }
            None => filter_log.no_vitals_24h += 1,
        }
    }

    if records.is_empty() {
        return Err(IngestError::EmptyCohort { filter_log });
    }
    Ok(Cohort { records, filter_log })
}

/// Table-1 style characterisation of a set of admissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub n_patients: usize,
    pub n_admissions: usize,
    pub pct_female: f64,
    pub age: MeanSd,
    pub los_hours: MeanSd,
    pub mortality_pct: f64,
    /// Over admissions with a recorded NEWS only.
    pub news: MeanSd,
    pub temperature: MeanSd,
    pub sbp: MeanSd,
    pub heart_rate: MeanSd,
    pub sats: MeanSd,
    pub resp_rate: MeanSd,
    pub pct_limited_consciousness: f64,
}

pub fn summarize_entries<'a, I>(entries: I) -> SummaryTable
where
    I: IntoIterator<Item = &'a CohortEntry>,
{
    let entries: Vec<&CohortEntry> = entries.into_iter().collect();
    let patients: BTreeSet<&str> =
        entries.iter().map(|e| e.admission.patient_id.as_str()).collect();
    let col = |f: &dyn Fn(&CohortEntry) -> f64| MeanSd::from_iter(entries.iter().map(|e| f(e)));
    SummaryTable {
        n_patients: patients.len(),
        n_admissions: entries.len(),
        pct_female: percent_true(entries.iter().map(|e| e.admission.gender == Gender::F)),
        age: col(&|e| f64::from(e.admission.age)),
        los_hours: col(&|e| e.admission.stay_hours()),
        mortality_pct: percent_true(entries.iter().map(|e| e.admission.died())),
        news: MeanSd::from_iter(entries.iter().filter_map(|e| e.admission.news.map(f64::from))),
        temperature: col(&|e| e.vitals.temperature),
        sbp: col(&|e| e.vitals.sbp),
        heart_rate: col(&|e| e.vitals.heart_rate),
        sats: col(&|e| e.vitals.sats),
        resp_rate: col(&|e| e.vitals.resp_rate),
        pct_limited_consciousness: percent_true(
            entries.iter().map(|e| e.vitals.consciousness.is_limited()),
        ),
    }
}

pub fn cohort_summary(cohort: &Cohort) -> SummaryTable {
    summarize_entries(&cohort.records)
}

const COHORT_HEADER: [&str; 16] = [
    "admission_id",
    "patient_id",
    "gender",
    "age",
    "admit_ts",
    "discharge_ts",
    "outcome",
    "icd10_primary",
    "vitals_ts",
    "temperature",
    "sbp",
    "heart_rate",
    "sats",
    "resp_rate",
    "consciousness",
    "news",
];

fn opt_news(n: Option<u8>) -> String {
    n.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the filtered cohort, one row per admission with its first vitals.
/// Floats use the shortest round-trip representation.
pub fn write_cohort_csv<W: Write>(cohort: &Cohort, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COHORT_HEADER)?;
    for CohortEntry { admission: a, vitals: v } in &cohort.records {
        w.write_record([
            a.admission_id.clone(),
            a.patient_id.clone(),
            a.gender.to_string(),
            a.age.to_string(),
            format_timestamp(a.admit_ts),
            format_timestamp(a.discharge_ts),
            a.outcome.to_string(),
            a.icd10_primary.clone(),
            format_timestamp(v.ts),
            v.temperature.to_string(),
            v.sbp.to_string(),
            v.heart_rate.to_string(),
            v.sats.to_string(),
            v.resp_rate.to_string(),
            v.consciousness.to_string(),
            opt_news(v.news),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohort_csv<R: Read>(input: R, filter_log: FilterLog) -> Result<Cohort, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let bad = |line: u64, reason: String| IngestError::CohortFile { line, reason };
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != COHORT_HEADER.len() {
            return Err(bad(line, format!("expected {} fields", COHORT_HEADER.len())));
        }
        let mut adm_fields = csv::StringRecord::new();
        (0..8).for_each(|i| adm_fields.push_field(&rec[i]));
        let mut admission = parse_admission_row(&adm_fields).map_err(|r| bad(line, r.to_string()))?;
        let mut vit_fields = csv::StringRecord::new();
        vit_fields.push_field(&rec[0]);
        (8..16).for_each(|i| vit_fields.push_field(&rec[i]));
        let vitals = parse_vitals_row(&vit_fields).map_err(|r| bad(line, r.to_string()))?;
        admission.news = vitals.news;
        records.push(CohortEntry { admission, vitals });
    }
    Ok(Cohort { records, filter_log })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADM_HEADER: &str =
        "admission_id,patient_id,gender,age,admit_ts,discharge_ts,outcome,icd10_primary\n";
    const VIT_HEADER: &str =
        "admission_id,ts,temperature,sbp,heart_rate,sats,resp_rate,consciousness,news\n";

    fn parse(adm: &str, vit: &str) -> Result<ParsedInput, IngestError> {
        parse_admissions(adm.as_bytes(), vit.as_bytes())
    }

    fn admission(id: &str, admit: i64, stay_h: f64) -> AdmissionRecord {
        AdmissionRecord {
            admission_id: id.into(),
            patient_id: format!("P{id}"),
            gender: Gender::F,
            age: 40,
            admit_ts: admit,
            discharge_ts: admit + (stay_h * 3600.0) as i64,
            outcome: Outcome::Survived,
            icd10_primary: "I251".into(),
            news: None,
        }
    }

    fn vitals(id: &str, ts: i64) -> VitalsSet {
        VitalsSet {
            admission_id: id.into(),
            ts,
            temperature: 36.8,
            sbp: 124.0,
            heart_rate: 80.0,
            sats: 96.0,
            resp_rate: 17.0,
            consciousness: Consciousness::Alert,
            news: Some(1),
        }
    }

    #[test]
    fn three_valid_rows() {
        let adm = format!(
            "{ADM_HEADER}A1,P1,F,40,2019-01-01T00:00:00Z,2019-01-02T00:00:00Z,survived,A41.9\n\
             A2,P2,M,50,2019-01-01T00:00:00Z,2019-01-02T00:00:00Z,died,I251\n\
             A3,P1,NK,60,2019-02-01T00:00:00Z,2019-02-02T00:00:00Z,survived,R10.3\n"
        );
        let vit = format!(
            "{VIT_HEADER}A1,2019-01-01T01:00:00Z,36.8,120,80,96,16,alert,1\n\
             A2,2019-01-01T01:00:00Z,37.8,110,90,94,20,limited,\n\
             A3,2019-02-01T01:00:00Z,36.5,130,70,99,14,alert,0\n"
        );
        let p = parse(&adm, &vit).unwrap();
        assert_eq!(p.admissions.len(), 3);
        assert_eq!(p.vitals.len(), 3);
        assert!(p.rejects.is_empty());
        assert_eq!(p.vitals[1].news, None);
        assert_eq!(p.admissions[1].outcome, Outcome::Died);
    }

    #[test]
    fn empty_sats_is_incomplete() {
        let adm = format!("{ADM_HEADER}A1,P1,F,40,2019-01-01T00:00:00Z,2019-01-02T00:00:00Z,survived,A41.9\n");
        let vit = format!("{VIT_HEADER}A1,2019-01-01T01:00:00Z,36.8,120,80,,16,alert,1\n");
        let p = parse(&adm, &vit).unwrap();
        assert!(p.vitals.is_empty());
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].line, 2);
        assert_eq!(p.rejects[0].reason.to_string(), "incomplete vitals");
    }

    #[test]
    fn discharge_before_admit_is_negative_stay() {
        let adm = format!("{ADM_HEADER}A1,P1,F,40,2019-01-02T00:00:00Z,2019-01-01T00:00:00Z,survived,A41.9\n");
        let p = parse(&adm, VIT_HEADER).unwrap();
        assert!(p.admissions.is_empty());
        assert_eq!(p.rejects[0].reason.to_string(), "negative stay");
    }

    #[test]
    fn out_of_bounds_vital_rejected() {
        let vit = format!("{VIT_HEADER}A1,2019-01-01T01:00:00Z,36.8,120,80,101,16,alert,1\n");
        let p = parse(ADM_HEADER, &vit).unwrap();
        assert_eq!(
            p.rejects[0].reason,
            RejectReason::OutOfBounds { field: "sats".into(), value: "101".into() }
        );
    }

    #[test]
    fn missing_header_is_fatal() {
        let err = parse("A1,P1,F,40\n", VIT_HEADER).unwrap_err();
        assert!(matches!(err, IngestError::MissingHeader { file: InputFile::Admissions, .. }));
        let err = parse("", VIT_HEADER).unwrap_err();
        assert!(matches!(err, IngestError::MissingHeader { .. }));
    }

    #[test]
    fn duplicate_admission_is_fatal() {
        let row = "A1,P1,F,40,2019-01-01T00:00:00Z,2019-01-02T00:00:00Z,survived,A41.9\n";
        let err = parse(&format!("{ADM_HEADER}{row}{row}"), VIT_HEADER).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateAdmission { line: 3, .. }));
    }

    #[test]
    fn icd10_pattern() {
        for ok in ["A41.9", "I251", "R10.3", "J18", "O9A1", "S72.00A"] {
            assert!(is_valid_icd10(ok), "{ok}");
        }
        for bad in ["", "41.9", "A4", "a41", "A41.", "A41.12345", "AB1"] {
            assert!(!is_valid_icd10(bad), "{bad}");
        }
    }

    #[test]
    fn filter_rules_and_log() {
        let t0 = 1_546_300_800;
        let adms = vec![
            admission("short", t0, 1.5),
            admission("late", t0, 48.0),
            admission("a", t0, 10.0),
            admission("b", t0, 10.0),
            admission("c", t0, 10.0),
        ];
        let vits = vec![
            vitals("short", t0 + 600),
            vitals("late", t0 + 30 * 3600),
            vitals("a", t0 + 600),
            vitals("b", t0 + 600),
            vitals("c", t0 + 600),
        ];
        let cohort = filter_cohort(&adms, &vits).unwrap();
        assert_eq!(cohort.len(), 3);
        assert_eq!(cohort.filter_log, FilterLog { short_stay: 1, no_vitals_24h: 1 });
        assert_eq!(cohort.filter_log.total() + cohort.len(), adms.len());
    }

    #[test]
    fn exactly_two_hours_and_window_edges_retained() {
        let t0 = 1_546_300_800;
        let adms = vec![admission("two", t0, 2.0), admission("edge", t0, 30.0)];
        let vits = vec![vitals("two", t0), vitals("edge", t0 + VITALS_WINDOW_SECS)];
        let cohort = filter_cohort(&adms, &vits).unwrap();
        assert_eq!(cohort.len(), 2);
    }

    #[test]
    fn earliest_set_wins_and_ties_use_file_order() {
        let t0 = 1_546_300_800;
        let adms = vec![admission("a", t0, 10.0)];
        let mut late = vitals("a", t0 + 5 * 3600);
        late.heart_rate = 100.0;
        let early = vitals("a", t0 + 3600);
        let cohort = filter_cohort(&adms, &[late.clone(), early.clone()]).unwrap();
        assert_eq!(cohort.records[0].vitals, early);

        let mut tie = early.clone();
        tie.heart_rate = 55.0;
        let cohort = filter_cohort(&adms, &[tie.clone(), early]).unwrap();
        assert_eq!(cohort.records[0].vitals, tie);
    }

    #[test]
    fn vitals_before_admission_do_not_count() {
        let t0 = 1_546_300_800;
        let adms = vec![admission("a", t0, 10.0), admission("b", t0, 10.0)];
        let vits = vec![vitals("a", t0 - 60), vitals("b", t0 + 60)];
        let cohort = filter_cohort(&adms, &vits).unwrap();
        assert_eq!(cohort.len(), 1);
        assert_eq!(cohort.filter_log.no_vitals_24h, 1);
    }

    #[test]
    fn empty_cohort_is_fatal_with_log() {
        let t0 = 1_546_300_800;
        let err = filter_cohort(&[admission("a", t0, 1.0)], &[]).unwrap_err();
        match err {
            IngestError::EmptyCohort { filter_log } => assert_eq!(filter_log.short_stay, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filtering_is_idempotent() {
        let t0 = 1_546_300_800;
        let adms = vec![admission("a", t0, 10.0), admission("b", t0, 1.0), admission("c", t0, 5.0)];
        let vits = vec![vitals("a", t0 + 60), vitals("b", t0 + 60), vitals("c", t0 + 90_000)];
        let once = filter_cohort(&adms, &vits).unwrap();
        let (a2, v2): (Vec<_>, Vec<_>) =
            once.records.iter().map(|e| (e.admission.clone(), e.vitals.clone())).unzip();
        let twice = filter_cohort(&a2, &v2).unwrap();
        assert_eq!(once.records, twice.records);
        assert_eq!(twice.filter_log.total(), 0);
    }

    #[test]
    fn summary_single_and_pair() {
        let t0 = 1_546_300_800;
        let mut a = admission("a", t0, 10.0);
        a.news = Some(2);
        let one = Cohort {
            records: vec![CohortEntry { admission: a.clone(), vitals: vitals("a", t0) }],
            filter_log: FilterLog::default(),
        };
        let s = cohort_summary(&one);
        assert_eq!(s.age.mean, 40.0);
        assert_eq!(s.age.sd, 0.0);
        assert_eq!(s.news.mean, 2.0);
        assert_eq!(s.news.sd, 0.0);
        assert_eq!(s.los_hours.mean, 10.0);

        let mut b = admission("b", t0, 10.0);
        a.age = 30;
        b.age = 50;
        b.outcome = Outcome::Died;
        b.patient_id = a.patient_id.clone();
        let two = Cohort {
            records: vec![
                CohortEntry { admission: a, vitals: vitals("a", t0) },
                CohortEntry { admission: b, vitals: vitals("b", t0) },
            ],
            filter_log: FilterLog::default(),
        };
        let s = cohort_summary(&two);
        assert_eq!((s.age.mean, s.age.sd), (40.0, 10.0));
        assert_eq!(s.mortality_pct, 50.0);
        assert_eq!(s.n_patients, 1);
        assert_eq!(s.n_admissions, 2);
        assert_eq!(s.news.n, 1);
    }

    #[test]
    fn cohort_csv_round_trip() {
        let t0 = 1_546_300_800;
        let mut v = vitals("a", t0 + 60);
        v.temperature = 36.81234567891234;
        v.news = None;
        let mut adm = admission("a", t0, 10.0);
        adm.news = None;
        let cohort = Cohort {
            records: vec![CohortEntry { admission: adm, vitals: v }],
            filter_log: FilterLog::default(),
        };
        let mut buf = Vec::new();
        write_cohort_csv(&cohort, &mut buf).unwrap();
        let back = read_cohort_csv(buf.as_slice(), FilterLog::default()).unwrap();
        assert_eq!(back, cohort);
    }
}
