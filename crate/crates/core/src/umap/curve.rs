//! Low-dimensional similarity curve `f(x) = 1 / (1 + a * x^(2b))`.
//!
//! `(a, b)` are fitted by Levenberg-Marquardt least squares against the
//! target `g(x) = 1` for `x <= min_dist`, `exp(-(x - min_dist) / spread)`
//! beyond, sampled at 300 evenly spaced points in `(0, 3 * spread]`.

use serde::{Deserialize, Serialize};

use super::UmapError;

pub const CURVE_SAMPLES: usize = 300;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    /// Sum of squared residuals at the optimum.
    pub residual: f64,
    pub iterations: usize,
}

#[inline]
pub fn curve(x: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * x.powf(2.0 * b))
}

pub fn target_curve(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x <= min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

/// The sample grid used by [`fit_ab`].
pub fn curve_grid(spread: f64) -> Vec<f64> {
    (1..=CURVE_SAMPLES).map(|i| 3.0 * spread * i as f64 / CURVE_SAMPLES as f64).collect()
}

fn sse(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (curve(x, a, b) - y).powi(2)).sum()
}

pub fn fit_ab(min_dist: f64, spread: f64) -> Result<CurveFit, UmapError> {
    if !(min_dist > 0.0 && min_dist <= spread && spread.is_finite()) {
        return Err(UmapError::InvalidConfig {
            field: "min_dist",
            reason: format!("need 0 < min_dist <= spread, got min_dist={min_dist}, spread={spread}"),
        });
    }
    let xs = curve_grid(spread);
    let ys: Vec<f64> = xs.iter().map(|&x| target_curve(x, min_dist, spread)).collect();

    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut cost = sse(&xs, &ys, a, b);
    let mut lambda = 1e-3;
    let mut trace = vec![cost];

    for iter in 0..MAX_ITER {
        // Gauss-Newton normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }

        let mut accepted = false;
        for _ in 0..50 {
            let (haa, hbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = haa * hbb - jab * jab;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(hbb * ga - jab * gb) / det;
            let step_b = -(haa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 { sse(&xs, &ys, na, nb) } else { f64::INFINITY };
            if new_cost.is_finite() && new_cost <= cost {
                let rel_step = (step_a.abs() / a.max(1e-12)).max(step_b.abs() / b.max(1e-12));
                let improvement = cost - new_cost;
                a = na;
                b = nb;
                cost = new_cost;
                trace.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < 1e-12 || improvement <= 1e-15 * cost.max(1e-300) {
                    return Ok(CurveFit { a, b, residual: cost, iterations: iter + 1 });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: at a (local) minimum.
            if a.is_finite() && b.is_finite() && cost.is_finite() {
                return Ok(CurveFit { a, b, residual: cost, iterations: iter + 1 });
            }
            return Err(UmapError::CurveFitDiverged { trace });
        }
    }
    Err(UmapError::CurveFitDiverged { trace })
}
