//! Vitals to feature-matrix transforms.
//!
//! Temperature, systolic pressure and heart rate are standardised (z-score by
//! default, min-max optional). SATS, respiratory rate and consciousness are
//! mapped through a bounded logit: the value is normalised into `(0, 1)` using
//! fixed physiological bounds, clipped to `[clip_eps, 1 - clip_eps]` so that
//! e.g. SATS = 100% stays finite, then `ln(p / (1 - p))` is taken.
//! Consciousness is encoded alert = 0 / limited = 1 before the logit.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Cohort, VitalsSet};
use crate::stats::MeanSd;

pub const N_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Temperature,
    Sbp,
    HeartRate,
    Sats,
    RespRate,
    Consciousness,
}

impl Feature {
    /// Fixed column order of every [`FeatureMatrix`].
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Temperature,
        Feature::Sbp,
        Feature::HeartRate,
        Feature::Sats,
        Feature::RespRate,
        Feature::Consciousness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Temperature => "temperature",
            Feature::Sbp => "sbp",
            Feature::HeartRate => "heart_rate",
            Feature::Sats => "sats",
            Feature::RespRate => "resp_rate",
            Feature::Consciousness => "consciousness",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Raw value of this vital, consciousness as 0/1.
    pub fn raw(self, v: &VitalsSet) -> f64 {
        match self {
            Feature::Temperature => v.temperature,
            Feature::Sbp => v.sbp,
            Feature::HeartRate => v.heart_rate,
            Feature::Sats => v.sats,
            Feature::RespRate => v.resp_rate,
            Feature::Consciousness => f64::from(u8::from(v.consciousness.is_limited())),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("cannot assemble a feature matrix from an empty cohort")]
    EmptyCohort,
    #[error("invalid preprocessing config: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite feature {feature} for admission {admission_id}")]
    NonFinite { feature: Feature, admission_id: String },
}

/// n × 6 preprocessed vitals, rows aligned with `row_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub values: Vec<[f64; N_FEATURES]>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, f: Feature) -> Vec<f64> {
        self.values.iter().map(|r| r[f.index()]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    #[default]
    ZScore,
    MinMax,
}

/// Affine map `x -> (x - center) / scale`; `scale > 0` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub center: f64,
    pub scale: f64,
}

impl ColumnScale {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitBounds {
    pub lower: f64,
    pub upper: f64,
    pub clip_eps: f64,
}

impl LogitBounds {
    pub fn apply(&self, x: f64) -> f64 {
        logit_transform(x, self.lower, self.upper, self.clip_eps)
    }

    pub fn invert(&self, y: f64) -> f64 {
        inverse_logit_transform(y, self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub scale_method: ScaleMethod,
    pub sats_bounds: (f64, f64),
    pub resp_rate_bounds: (f64, f64),
    pub clip_eps: f64,
    /// Also z-score the three logit columns after the logit.
    pub standardize_logit: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            scale_method: ScaleMethod::ZScore,
            sats_bounds: (0.0, 100.0),
            resp_rate_bounds: (0.0, 60.0),
            clip_eps: 1e-3,
            standardize_logit: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(PreprocessError::InvalidConfig {
                field: "clip_eps",
                reason: format!("must lie in (0, 0.5), got {}", self.clip_eps),
            });
        }
        for (field, (lo, hi)) in
            [("sats_bounds", self.sats_bounds), ("resp_rate_bounds", self.resp_rate_bounds)]
        {
            if !(hi > lo) {
                return Err(PreprocessError::InvalidConfig {
                    field,
                    reason: format!("upper must exceed lower, got ({lo}, {hi})"),
                });
            }
        }
        Ok(())
    }
}

/// Everything needed to re-apply (or invert) the transform elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub method: ScaleMethod,
    /// temperature, sbp, heart_rate
    pub scaled: [ColumnScale; 3],
    /// sats, resp_rate, consciousness
    pub logit: [LogitBounds; 3],
    pub post_logit: Option<[ColumnScale; 3]>,
    /// Columns that were constant and mapped to zero.
    pub degenerate: Vec<Feature>,
}

impl ScalerParams {
    pub fn transform_row(&self, raw: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for i in 0..3 {
            out[i] = self.scaled[i].apply(raw[i]);
            let y = self.logit[i].apply(raw[i + 3]);
            out[i + 3] = match &self.post_logit {
                Some(post) => post[i].apply(y),
                None => y,
            };
        }
        out
    }

    /// Inverse map; logit columns come back clipped to `[eps, 1 - eps]`.
    pub fn inverse_row(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for i in 0..3 {
            out[i] = self.scaled[i].invert(z[i]);
            let y = match &self.post_logit {
                Some(post) => post[i].invert(z[i + 3]),
                None => z[i + 3],
            };
            out[i + 3] = self.logit[i].invert(y);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledColumn {
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Constant input; values are all zero.
    pub degenerate: bool,
}

fn is_degenerate(spread: f64, center: f64) -> bool {
    !(spread > 1e-12 * center.abs().max(1.0))
}

/// Z-score standardisation with population sd. Constant columns map to all
/// zeros and are flagged.
pub fn standard_scale(column: &[f64]) -> ScaledColumn {
    let MeanSd { mean, sd, .. } = MeanSd::from_slice(column);
    if is_degenerate(sd, mean) {
        warn!("constant column (value {mean}); scaled to zeros");
        return ScaledColumn { values: vec![0.0; column.len()], mean, sd, degenerate: true };
    }
    ScaledColumn { values: column.iter().map(|x| (x - mean) / sd).collect(), mean, sd, degenerate: false }
}

fn fit_scale(column: &[f64], method: ScaleMethod) -> (ColumnScale, bool) {
    let (center, spread) = match method {
        ScaleMethod::ZScore => {
            let s = MeanSd::from_slice(column);
            (s.mean, s.sd)
        }
        ScaleMethod::MinMax => {
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi - lo)
        }
    };
    if is_degenerate(spread, center) {
        // scale 1 keeps the inverse defined; the constant maps to zero
        (ColumnScale { center, scale: 1.0 }, true)
    } else {
        (ColumnScale { center, scale: spread }, false)
    }
}

/// Bounded logit: normalise into `(0, 1)`, clip, then `ln(p / (1 - p))`.
pub fn logit_transform(value: f64, lower: f64, upper: f64, clip_eps: f64) -> f64 {
    let p = ((value - lower) / (upper - lower)).clamp(clip_eps, 1.0 - clip_eps);
    (p / (1.0 - p)).ln()
}

pub fn inverse_logit_transform(y: f64, lower: f64, upper: f64) -> f64 {
    let p = 1.0 / (1.0 + (-y).exp());
    lower + p * (upper - lower)
}

/// Raw vitals of a cohort in feature order, consciousness as 0/1.
pub fn raw_rows(cohort: &Cohort) -> Vec<[f64; N_FEATURES]> {
    cohort
        .records
        .iter()
        .map(|e| Feature::ALL.map(|f| f.raw(&e.vitals)))
        .collect()
}

/// Builds the embedder input. Rows follow cohort order.
pub fn assemble_matrix(
    cohort: &Cohort,
    config: &PreprocessConfig,
) -> Result<(FeatureMatrix, ScalerParams), PreprocessError> {
    config.validate()?;
    if cohort.is_empty() {
        return Err(PreprocessError::EmptyCohort);
    }
    let raw = raw_rows(cohort);
    let column = |i: usize| raw.iter().map(|r| r[i]).collect::<Vec<f64>>();

    let mut degenerate = Vec::new();
    let mut scaled = [ColumnScale { center: 0.0, scale: 1.0 }; 3];
    for (i, slot) in scaled.iter_mut().enumerate() {
        let (s, flat) = fit_scale(&column(i), config.scale_method);
        if flat {
            warn!("{} is constant across the cohort", Feature::ALL[i]);
            degenerate.push(Feature::ALL[i]);
        }
        *slot = s;
    }

    let eps = config.clip_eps;
    let bounds = |(lower, upper): (f64, f64)| LogitBounds { lower, upper, clip_eps: eps };
    let logit = [bounds(config.sats_bounds), bounds(config.resp_rate_bounds), bounds((0.0, 1.0))];

    let post_logit = if config.standardize_logit {
        let mut post = [ColumnScale { center: 0.0, scale: 1.0 }; 3];
        for (i, slot) in post.iter_mut().enumerate() {
            let ys: Vec<f64> = raw.iter().map(|r| logit[i].apply(r[i + 3])).collect();
            let (s, flat) = fit_scale(&ys, ScaleMethod::ZScore);
            if flat {
                warn!("{} is constant after the logit", Feature::ALL[i + 3]);
                degenerate.push(Feature::ALL[i + 3]);
            }
            *slot = s;
        }
        Some(post)
    } else {
        None
    };

    let params = ScalerParams { method: config.scale_method, scaled, logit, post_logit, degenerate };
    let values: Vec<[f64; N_FEATURES]> = raw.iter().map(|r| params.transform_row(r)).collect();
    for (row, id) in values.iter().zip(&cohort.records) {
        if let Some(f) = Feature::ALL.iter().find(|f| !row[f.index()].is_finite()) {
            return Err(PreprocessError::NonFinite {
                feature: *f,
                admission_id: id.admission.admission_id.clone(),
            });
        }
    }
    Ok((FeatureMatrix { row_ids: cohort.admission_ids(), values }, params))
}

/// Writes `admission_id,temperature,...,consciousness`.
pub fn write_matrix_csv<W: std::io::Write>(m: &FeatureMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["admission_id"];
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    w.write_record(&header)?;
    for (id, row) in m.row_ids.iter().zip(&m.values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: std::io::Read>(input: R) -> Result<FeatureMatrix, String> {
    let mut r = csv::Reader::from_reader(input);
    let mut m = FeatureMatrix { row_ids: Vec::new(), values: Vec::new() };
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != N_FEATURES + 1 {
            return Err(format!("expected {} fields, found {}", N_FEATURES + 1, rec.len()));
        }
        let mut row = [0.0; N_FEATURES];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = rec[i + 1].parse().map_err(|_| format!("bad number `{}`", &rec[i + 1]))?;
        }
        m.row_ids.push(rec[0].to_string());
        m.values.push(row);
    }
    Ok(m)
}
