//! Small descriptive-statistics helpers shared by the summary tables.
//!
//! All standard deviations are population standard deviations (divisor `n`).

use serde::{Deserialize, Serialize};

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    /// Two-pass mean / population sd. Empty input yields NaNs with `n = 0`.
    pub fn from_slice(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, sd: var.sqrt(), n }
    }

    pub fn from_iter<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        Self::from_slice(&v)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    MeanSd::from_slice(values).mean
}

pub fn population_sd(values: &[f64]) -> f64 {
    MeanSd::from_slice(values).sd
}

/// Percentage of `true` entries, in `[0, 100]`. Empty input gives NaN.
pub fn percent_true<I: IntoIterator<Item = bool>>(flags: I) -> f64 {
    let (hits, total) = flags
        .into_iter()
        .fold((0usize, 0usize), |(h, t), f| (h + usize::from(f), t + 1));
    if total == 0 {
        f64::NAN
    } else {
        100.0 * hits as f64 / total as f64
    }
}
