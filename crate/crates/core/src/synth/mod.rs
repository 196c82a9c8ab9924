//! Synthetic cohorts with planted subtypes.
//!
//! Each admission draws a subtype by share, then every attribute
//! independently from that subtype's marginals. Vitals come from truncated
//! normals inside the ingest bounds, rounded to the resolution a ward chart
//! would record. The output uses the same CSV schemas ingest reads, plus a
//! separate `planted_labels.csv` that never feeds the pipeline.

mod degrade;
pub mod news;

pub use degrade::{degrade_cohort, DefectAmount, DegradeManifest, DegradeSpec, MissingVital};
pub use news::{Band, NewsBanding};

use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal, Normal};
use thiserror::Error;

use crate::ingest::{
    format_timestamp, AdmissionRecord, Consciousness, Gender, Outcome, VitalsSet, ADMISSIONS_HEADER,
    HEART_RATE_BOUNDS, MIN_STAY_SECS, RESP_RATE_BOUNDS, SATS_BOUNDS, SBP_BOUNDS, TEMPERATURE_BOUNDS,
    VITALS_HEADER,
};
use crate::rng;

pub const ADMISSIONS_FILE: &str = "admissions.csv";
pub const VITALS_FILE: &str = "vitals.csv";
pub const PLANTED_LABELS_FILE: &str = "planted_labels.csv";

/// Admission count of the published cohort.
pub const PAPER_N_ADMISSIONS: usize = 95_825;
const PAPER_N_PATIENTS: usize = 60_731;
/// 2017-11-01T00:00:00Z
const DEFAULT_START_TS: i64 = 1_509_494_400;
const DEFAULT_SPAN_DAYS: u32 = 1_241;
/// Vitals are taken within this many seconds of admission.
const VITALS_DELAY_SECS: i64 = 7_200;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {field}: {reason}")]
    InvalidSpec { field: String, reason: String },
    #[error("{requested} defects requested but only {available} admissions")]
    TooManyDefects { requested: usize, available: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec { field: field.into(), reason: reason.into() }
}

/// Normal(mean, sd) truncated to `[lower, upper]`, then rounded to
/// `decimals` places. `sd == 0` is a point mass at the rounded mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitalDistribution {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub decimals: u8,
}

impl VitalDistribution {
    pub fn new(mean: f64, sd: f64, bounds: (f64, f64), decimals: u8) -> Self {
        Self { mean, sd, lower: bounds.0, upper: bounds.1, decimals }
    }

    fn scale(&self) -> f64 {
        10f64.powi(i32::from(self.decimals))
    }

    fn round(&self, x: f64) -> f64 {
        let s = self.scale();
        (x * s).round() / s
    }

    fn validate(&self, field: &str) -> Result<(), SynthError> {
        let finite = [self.mean, self.sd, self.lower, self.upper].iter().all(|v| v.is_finite());
        if !finite || self.sd < 0.0 || self.lower > self.upper {
            return Err(invalid(field, "needs finite mean, sd >= 0 and lower <= upper"));
        }
        if self.sd == 0.0 && !(self.lower..=self.upper).contains(&self.round(self.mean)) {
            return Err(invalid(field, "point mass outside bounds"));
        }
        if self.sd > 0.0 {
            let n = self.standard();
            if n.cdf(self.z(self.upper)) - n.cdf(self.z(self.lower)) <= 0.0 {
                return Err(invalid(field, "no probability mass inside bounds"));
            }
        }
        if self.decimals > 6 {
            return Err(invalid(field, "at most 6 decimals"));
        }
        Ok(())
    }

    fn standard(&self) -> Normal {
        Normal::standard()
    }

    fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd == 0.0 {
            return self.round(self.mean);
        }
        let n = self.standard();
        let (pa, pb) = (n.cdf(self.z(self.lower)), n.cdf(self.z(self.upper)));
        let u = pa + (pb - pa) * rng.random::<f64>();
        let x = (self.mean + self.sd * n.inverse_cdf(u)).clamp(self.lower, self.upper);
        self.round(x)
    }

    /// Support and probabilities of the rounded, truncated distribution.
    pub fn pmf(&self) -> Vec<(f64, f64)> {
        if self.sd == 0.0 {
            return vec![(self.round(self.mean), 1.0)];
        }
        let n = self.standard();
        let s = self.scale();
        let h = 0.5 / s;
        let (lo, hi) = ((self.lower * s).round() as i64, (self.upper * s).round() as i64);
        let (pa, pb) = (n.cdf(self.z(self.lower)), n.cdf(self.z(self.upper)));
        (lo..=hi)
            .filter_map(|k| {
                let g = k as f64 / s;
                let a = (g - h).max(self.lower);
                let b = (g + h).min(self.upper);
                (b > a).then(|| (g, (n.cdf(self.z(b)) - n.cdf(self.z(a))) / (pb - pa)))
            })
            .collect()
    }

    pub fn expected_mean(&self) -> f64 {
        self.pmf().iter().map(|(g, p)| g * p).sum()
    }

    pub fn expected_sd(&self) -> f64 {
        let m = self.expected_mean();
        self.pmf().iter().map(|(g, p)| p * (g - m).powi(2)).sum::<f64>().sqrt()
    }
}

/// Stay length: `floor_hours` plus a log-normal excess whose own mean and
/// sd are `mean_hours - floor_hours` and `sd_hours`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosDistribution {
    pub mean_hours: f64,
    pub sd_hours: f64,
    pub floor_hours: f64,
}

impl LosDistribution {
    /// Log-space (mu, sigma) of the excess.
    pub fn log_params(&self) -> (f64, f64) {
        let m = self.mean_hours - self.floor_hours;
        let sigma2 = (1.0 + (self.sd_hours / m).powi(2)).ln();
        (m.ln() - sigma2 / 2.0, sigma2.sqrt())
    }

    pub fn sample_hours<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (mu, sigma) = self.log_params();
        let ln = LogNormal::new(mu, sigma).expect("validated");
        self.floor_hours + ln.inverse_cdf(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenderMix {
    pub female: f64,
    pub not_known: f64,
    pub not_specified: f64,
}

impl GenderMix {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Gender {
        let u: f64 = rng.random();
        if u < self.female {
            Gender::F
        } else if u < self.female + self.not_known {
            Gender::NK
        } else if u < self.female + self.not_known + self.not_specified {
            Gender::NS
        } else {
            Gender::M
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Icd10Weight {
    pub code: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtypeSpec {
    pub name: String,
    pub share: f64,
    pub temperature: VitalDistribution,
    pub sbp: VitalDistribution,
    pub heart_rate: VitalDistribution,
    pub sats: VitalDistribution,
    pub resp_rate: VitalDistribution,
    pub p_limited_consciousness: f64,
    pub mortality: f64,
    pub los: LosDistribution,
    pub age: VitalDistribution,
    pub gender: GenderMix,
    pub icd10: Vec<Icd10Weight>,
    /// Published mean NEWS, kept for comparison only; generated NEWS comes
    /// from the banding table.
    pub news_reference: f64,
}

impl SubtypeSpec {
    pub fn leading_icd10(&self) -> Option<&str> {
        self.icd10.iter().max_by(|a, b| a.p.total_cmp(&b.p)).map(|w| w.code.as_str())
    }

    fn validate(&self, k: usize) -> Result<(), SynthError> {
        let f = |name: &str| format!("subtypes[{k}].{name}");
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.share) {
            return Err(invalid(f("share"), "outside [0, 1]"));
        }
        if !unit(self.p_limited_consciousness) {
            return Err(invalid(f("p_limited_consciousness"), "outside [0, 1]"));
        }
        if !unit(self.mortality) {
            return Err(invalid(f("mortality"), "outside [0, 1]"));
        }
        let g = self.gender;
        if ![g.female, g.not_known, g.not_specified].into_iter().all(unit) || g.female + g.not_known + g.not_specified > 1.0 {
            return Err(invalid(f("gender"), "probabilities must lie in [0, 1] and sum to at most 1"));
        }
        for (name, d) in [
            ("temperature", &self.temperature),
            ("sbp", &self.sbp),
            ("heart_rate", &self.heart_rate),
            ("sats", &self.sats),
            ("resp_rate", &self.resp_rate),
            ("age", &self.age),
        ] {
            d.validate(&f(name))?;
        }
        if self.age.lower < 0.0 || self.age.decimals != 0 {
            return Err(invalid(f("age"), "must be a non-negative integer distribution"));
        }
        let los = self.los;
        if !(los.floor_hours * 3600.0 >= MIN_STAY_SECS as f64 && los.mean_hours > los.floor_hours && los.sd_hours > 0.0) {
            return Err(invalid(f("los"), "need floor >= 2h, mean > floor and sd > 0"));
        }
        if self.icd10.is_empty() || self.icd10.iter().any(|w| !unit(w.p)) {
            return Err(invalid(f("icd10"), "needs at least one code with probability in [0, 1]"));
        }
        if let Some(w) = self.icd10.iter().find(|w| !crate::ingest::is_valid_icd10(&w.code)) {
            return Err(invalid(f("icd10"), format!("invalid code {}", w.code)));
        }
        let total: f64 = self.icd10.iter().map(|w| w.p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(f("icd10"), format!("probabilities sum to {total}")));
        }
        Ok(())
    }

    fn sample_icd10<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for w in &self.icd10 {
            acc += w.p;
            if u < acc {
                return &w.code;
            }
        }
        &self.icd10.last().expect("validated").code
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_admissions: usize,
    /// Probability that an admission belongs to an earlier patient.
    pub readmission_rate: f64,
    pub subtypes: Vec<SubtypeSpec>,
    pub seed: u64,
    /// Admissions are spread uniformly over `[start_ts, start_ts + span_days)`.
    pub start_ts: i64,
    pub span_days: u32,
    #[serde(default)]
    pub banding: NewsBanding,
}

impl CohortSpec {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n_admissions = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_admissions == 0 {
            return Err(invalid("n_admissions", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.readmission_rate) {
            return Err(invalid("readmission_rate", "outside [0, 1)"));
        }
        if self.subtypes.is_empty() || self.subtypes.len() > usize::from(u8::MAX) {
            return Err(invalid("subtypes", "need between 1 and 255 subtypes"));
        }
        for (k, s) in self.subtypes.iter().enumerate() {
            s.validate(k)?;
        }
        let total: f64 = self.subtypes.iter().map(|s| s.share).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(invalid("subtypes.share", format!("shares sum to {total}")));
        }
        if self.span_days == 0 {
            return Err(invalid("span_days", "must be > 0"));
        }
        Ok(())
    }

    pub fn shares(&self) -> Vec<f64> {
        self.subtypes.iter().map(|s| s.share).collect()
    }

    /// Mixture mortality implied by the spec.
    pub fn expected_mortality(&self) -> f64 {
        self.subtypes.iter().map(|s| s.share * s.mortality).sum()
    }
}

impl Default for CohortSpec {
    fn default() -> Self {
        default_paper_spec()
    }
}

fn icd10(leading: (&str, f64), rest: &[(&str, f64)], remainder: &str) -> Vec<Icd10Weight> {
    let mut v = vec![Icd10Weight { code: leading.0.into(), p: leading.1 }];
    v.extend(rest.iter().map(|&(code, p)| Icd10Weight { code: code.into(), p }));
    let used: f64 = v.iter().map(|w| w.p).sum();
    v.push(Icd10Weight { code: remainder.into(), p: 1.0 - used });
    v
}

/// Five subtypes with the published per-cluster marginals.
///
/// Choices not fixed by the table:
/// * subtypes 1, 3 and 4 have SATS fixed at 100, 99 and 98 (each is
///   truncated to its own rounding cell), and subtype 2 SATS is truncated at
///   96, so no two strata share an integer reading;
/// * only subtype 0 has limited consciousness;
/// * subtype 2 mortality is 3.6%, which rounds to the published 4% and makes
///   the mixture reproduce the overall 2.84%.
pub fn default_paper_spec() -> CohortSpec {
    let counts = [453.0, 8713.0, 61022.0, 10080.0, 15557.0];
    let total: f64 = counts.iter().sum();
    let temp = |m, s| VitalDistribution::new(m, s, TEMPERATURE_BOUNDS, 1);
    let sbp = |m, s| VitalDistribution::new(m, s, SBP_BOUNDS, 0);
    let hr = |m, s| VitalDistribution::new(m, s, HEART_RATE_BOUNDS, 0);
    let rr = |m, s| VitalDistribution::new(m, s, RESP_RATE_BOUNDS, 0);
    let sats = |m, s| VitalDistribution::new(m, s, SATS_BOUNDS, 0);
    let age = |m, s| VitalDistribution::new(m, s, (16.0, 105.0), 0);
    let los = |m, s| LosDistribution { mean_hours: m, sd_hours: s, floor_hours: 2.0 };
    let gender = |f: f64| GenderMix { female: f / 100.0, not_known: 0.002, not_specified: 0.002 };
    let mk = |k: usize, name: &str| SubtypeSpec {
        name: name.into(),
        share: counts[k] / total,
        temperature: temp(0.0, 0.0),
        sbp: sbp(0.0, 0.0),
        heart_rate: hr(0.0, 0.0),
        sats: sats(0.0, 0.0),
        resp_rate: rr(0.0, 0.0),
        p_limited_consciousness: 0.0,
        mortality: 0.0,
        los: los(0.0, 0.0),
        age: age(0.0, 0.0),
        gender: gender(0.0),
        icd10: Vec::new(),
        news_reference: 0.0,
    };
    let subtypes = vec![
        SubtypeSpec {
            temperature: temp(36.68, 0.68),
            sbp: sbp(121.0, 26.33),
            heart_rate: hr(79.18, 15.86),
            sats: sats(95.72, 3.13),
            resp_rate: rr(18.14, 4.60),
            p_limited_consciousness: 1.0,
            mortality: 0.21,
            los: los(74.5, 162.8),
            age: age(69.9, 18.0),
            gender: gender(47.7),
            icd10: icd10(
                ("A41.9", 0.30),
                &[("J18.9", 0.15), ("N39.0", 0.10), ("I63.9", 0.10), ("R40.2", 0.08), ("J69.0", 0.07), ("E87.1", 0.05), ("K92.2", 0.05), ("G40.9", 0.05)],
                "Z03.8",
            ),
            news_reference: 5.78,
            ..mk(0, "unconscious")
        },
        SubtypeSpec {
            temperature: temp(36.79, 0.56),
            sbp: sbp(126.0, 21.09),
            heart_rate: hr(78.10, 16.23),
            sats: VitalDistribution::new(100.0, 0.02, (99.5, SATS_BOUNDS.1), 0),
            resp_rate: rr(16.72, 2.47),
            mortality: 0.02,
            los: los(40.5, 102.5),
            age: age(49.6, 21.6),
            gender: gender(63.6),
            icd10: icd10(
                ("R10.3", 0.20),
                &[("R10.4", 0.12), ("K35.8", 0.10), ("N39.0", 0.08), ("R07.4", 0.08), ("K80.2", 0.07), ("O20.9", 0.06), ("S06.0", 0.05), ("M54.5", 0.05), ("J06.9", 0.05), ("F10.0", 0.04)],
                "Z03.8",
            ),
            news_reference: 0.99,
            ..mk(1, "sats-100")
        },
        SubtypeSpec {
            temperature: temp(36.85, 0.62),
            sbp: sbp(130.0, 23.13),
            heart_rate: hr(81.62, 17.53),
            sats: VitalDistribution::new(95.53, 2.02, (SATS_BOUNDS.0, 96.49), 0),
            resp_rate: rr(17.53, 2.95),
            mortality: 0.036,
            los: los(52.2, 112.6),
            age: age(64.1, 18.9),
            gender: gender(48.3),
            icd10: icd10(
                ("I251", 0.14),
                &[("I48.9", 0.08), ("J44.1", 0.08), ("I50.9", 0.07), ("R07.4", 0.07), ("J18.9", 0.06), ("C34.9", 0.05), ("N39.0", 0.05), ("I21.4", 0.05), ("G45.9", 0.04), ("K92.2", 0.04), ("S72.0", 0.04), ("E11.9", 0.04), ("R55", 0.04), ("F05.9", 0.03), ("M79.6", 0.03)],
                "Z03.8",
            ),
            news_reference: 1.65,
            ..mk(2, "sats-low")
        },
        SubtypeSpec {
            temperature: temp(36.75, 0.46),
            sbp: sbp(128.0, 21.19),
            heart_rate: hr(77.04, 14.91),
            sats: sats(99.0, 0.0),
            resp_rate: rr(16.63, 2.11),
            mortality: 0.01,
            los: los(38.1, 90.6),
            age: age(52.3, 21.6),
            gender: gender(57.3),
            icd10: icd10(
                ("I251", 0.15),
                &[("R07.4", 0.12), ("I48.9", 0.08), ("R10.4", 0.07), ("J18.9", 0.06), ("I10", 0.06), ("K29.7", 0.05), ("N39.0", 0.05), ("M54.5", 0.05), ("S09.9", 0.05), ("R55", 0.05), ("E11.9", 0.04), ("F41.9", 0.04), ("G43.9", 0.04)],
                "Z03.8",
            ),
            news_reference: 0.78,
            ..mk(3, "sats-99")
        },
        SubtypeSpec {
            temperature: temp(36.73, 0.44),
            sbp: sbp(129.0, 20.54),
            heart_rate: hr(76.54, 13.82),
            sats: VitalDistribution::new(98.0, 0.09, (97.5, 98.49), 0),
            resp_rate: rr(16.63, 2.06),
            mortality: 0.01,
            los: los(40.2, 94.6),
            age: age(56.2, 21.0),
            gender: gender(51.1),
            icd10: icd10(
                ("I251", 0.13),
                &[("R07.4", 0.11), ("I48.9", 0.09), ("J44.1", 0.07), ("R10.4", 0.07), ("I50.9", 0.06), ("N39.0", 0.06), ("J18.9", 0.05), ("S72.0", 0.05), ("M54.5", 0.05), ("K59.0", 0.05), ("C18.9", 0.04), ("G40.9", 0.04), ("O99.8", 0.03)],
                "Z03.8",
            ),
            news_reference: 0.69,
            ..mk(4, "sats-98")
        },
    ];
    CohortSpec {
        n_admissions: PAPER_N_ADMISSIONS,
        readmission_rate: 1.0 - PAPER_N_PATIENTS as f64 / PAPER_N_ADMISSIONS as f64,
        subtypes,
        seed: 42,
        start_ts: DEFAULT_START_TS,
        span_days: DEFAULT_SPAN_DAYS,
        banding: NewsBanding::default(),
    }
}

/// Generated records, in admission order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub admissions: Vec<AdmissionRecord>,
    pub vitals: Vec<VitalsSet>,
    /// Generating subtype index per admission.
    pub planted: Vec<u8>,
}

/// The three CSV documents of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortFiles {
    pub admissions_csv: String,
    pub vitals_csv: String,
    pub planted_labels_csv: String,
}

impl CohortFiles {
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(ADMISSIONS_FILE), &self.admissions_csv)?;
        fs::write(dir.join(VITALS_FILE), &self.vitals_csv)?;
        fs::write(dir.join(PLANTED_LABELS_FILE), &self.planted_labels_csv)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, SynthError> {
        Ok(Self {
            admissions_csv: fs::read_to_string(dir.join(ADMISSIONS_FILE))?,
            vitals_csv: fs::read_to_string(dir.join(VITALS_FILE))?,
            planted_labels_csv: fs::read_to_string(dir.join(PLANTED_LABELS_FILE))?,
        })
    }
}

fn pick(shares: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, s) in shares.iter().enumerate() {
        acc += s;
        if u < acc {
            return k;
        }
    }
    shares.iter().rposition(|&s| s > 0.0).unwrap_or(0)
}

pub fn admission_id(i: usize) -> String {
    format!("ADM{i:07}")
}

fn patient_id(i: usize) -> String {
    format!("PAT{i:07}")
}

/// Draws the records. Admission `i` consumes only RNG stream `i`, so each
/// row is independent of the others; patient ids are then assigned in one
/// sequential pass (a readmission reuses a uniformly chosen earlier patient).
pub fn generate_records(spec: &CohortSpec) -> Result<SyntheticCohort, SynthError> {
    spec.validate()?;
    let n = spec.n_admissions;
    let shares = spec.shares();
    let seed = rng::derive_seed(spec.seed, "synth");
    let span_secs = i64::from(spec.span_days) * 86_400;
    let mut out = SyntheticCohort {
        admissions: Vec::with_capacity(n),
        vitals: Vec::with_capacity(n),
        planted: Vec::with_capacity(n),
    };
    let mut n_patients = 0usize;
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        let k = pick(&shares, r.random());
        let st = &spec.subtypes[k];

        let readmit = i > 0 && n_patients > 0 && r.random::<f64>() < spec.readmission_rate;
        let earlier = r.random_range(0..n_patients.max(1));
        let pid = if readmit {
            earlier
        } else {
            n_patients += 1;
            n_patients - 1
        };

        let admit_ts = spec.start_ts + r.random_range(0..span_secs);
        let stay_secs = (st.los.sample_hours(&mut r) * 3600.0).round() as i64;
        let discharge_ts = admit_ts + stay_secs.max(MIN_STAY_SECS);
        let vitals_ts = admit_ts + r.random_range(0..VITALS_DELAY_SECS);

        let temperature = st.temperature.sample(&mut r);
        let sbp = st.sbp.sample(&mut r);
        let heart_rate = st.heart_rate.sample(&mut r);
        let sats = st.sats.sample(&mut r);
        let resp_rate = st.resp_rate.sample(&mut r);
        let limited = r.random::<f64>() < st.p_limited_consciousness;
        let news = spec.banding.score(temperature, sbp, heart_rate, sats, resp_rate, limited);

        let died = r.random::<f64>() < st.mortality;
        let age = st.age.sample(&mut r) as u32;
        let gender = st.gender.sample(&mut r);
        let code = st.sample_icd10(&mut r).to_string();

        let id = admission_id(i);
        out.admissions.push(AdmissionRecord {
            admission_id: id.clone(),
            patient_id: patient_id(pid),
            gender,
            age,
            admit_ts,
            discharge_ts,
            outcome: if died { Outcome::Died } else { Outcome::Survived },
            icd10_primary: code,
            news: None,
        });
        out.vitals.push(VitalsSet {
            admission_id: id,
            ts: vitals_ts,
            temperature,
            sbp,
            heart_rate,
            sats,
            resp_rate,
            consciousness: if limited { Consciousness::Limited } else { Consciousness::Alert },
            news: Some(news),
        });
        out.planted.push(k as u8);
    }
    Ok(out)
}

fn decimals_of(spec: &CohortSpec) -> [usize; 5] {
    let max = |f: fn(&SubtypeSpec) -> u8| spec.subtypes.iter().map(f).max().unwrap_or(0) as usize;
    [
        max(|s| s.temperature.decimals),
        max(|s| s.sbp.decimals),
        max(|s| s.heart_rate.decimals),
        max(|s| s.sats.decimals),
        max(|s| s.resp_rate.decimals),
    ]
}

impl SyntheticCohort {
    /// Serialises with each vital printed at the finest resolution any
    /// subtype uses for it.
    pub fn to_files(&self, spec: &CohortSpec) -> Result<CohortFiles, SynthError> {
        let d = decimals_of(spec);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ADMISSIONS_HEADER)?;
        for a in &self.admissions {
            w.write_record([
                a.admission_id.as_str(),
                &a.patient_id,
                &a.gender.to_string(),
                &a.age.to_string(),
                &format_timestamp(a.admit_ts),
                &format_timestamp(a.discharge_ts),
                &a.outcome.to_string(),
                &a.icd10_primary,
            ])?;
        }
        let admissions_csv = into_string(w)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(VITALS_HEADER)?;
        for v in &self.vitals {
            w.write_record([
                v.admission_id.clone(),
                format_timestamp(v.ts),
                format!("{:.*}", d[0], v.temperature),
                format!("{:.*}", d[1], v.sbp),
                format!("{:.*}", d[2], v.heart_rate),
                format!("{:.*}", d[3], v.sats),
                format!("{:.*}", d[4], v.resp_rate),
                v.consciousness.to_string(),
                v.news.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        let vitals_csv = into_string(w)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["admission_id", "subtype"])?;
        for (a, k) in self.admissions.iter().zip(&self.planted) {
            w.write_record([a.admission_id.as_str(), &k.to_string()])?;
        }
        let planted_labels_csv = into_string(w)?;
        Ok(CohortFiles { admissions_csv, vitals_csv, planted_labels_csv })
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String, SynthError> {
    let bytes = w.into_inner().map_err(|e| SynthError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn generate_cohort(spec: &CohortSpec) -> Result<CohortFiles, SynthError> {
    generate_records(spec)?.to_files(spec)
}

/// Reads `planted_labels.csv` as `(admission_id, subtype)` pairs.
pub fn read_planted_labels(csv_text: &str) -> Result<Vec<(String, u8)>, SynthError> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let k = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| invalid("planted_labels", format!("bad row {rec:?}")))?;
        out.push((rec.get(0).unwrap_or_default().to_string(), k));
    }
    Ok(out)
}
