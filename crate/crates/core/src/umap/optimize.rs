//! Stochastic layout optimisation of the fuzzy graph in 2-D.
//!
//! Edges are visited on the `epochs_per_sample` schedule: an edge of weight
//! `w` fires every `max_w / w` epochs, and each firing draws
//! `negative_sample_rate` repulsive samples. Every head row owns a ChaCha
//! stream keyed by its index, so the draws do not depend on scheduling.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fuzzy::FuzzyGraph;
use super::UmapError;
use crate::rng;

pub const GRADIENT_CLIP: f64 = 4.0;
/// Offset keeping the repulsive term finite at zero distance.
pub const REPULSION_EPS: f64 = 1e-3;
pub const REPULSION_STRENGTH: f64 = 1.0;

/// Low-dimensional membership in terms of the squared distance `s`.
#[inline]
pub fn membership(s: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * s.powf(b))
}

/// Attractive loss `-ln f(s) = ln(1 + a s^b)` for one edge.
pub fn attractive_loss(s: f64, a: f64, b: f64) -> f64 {
    (a * s.powf(b)).ln_1p()
}

/// Repulsive loss `-gamma ln(1 - f(s + eps))` for one negative sample.
pub fn repulsive_loss(s: f64, a: f64, b: f64, gamma: f64) -> f64 {
    -gamma * (1.0 - membership(s + REPULSION_EPS, a, b)).ln()
}

/// `c` such that `c * (y_i - y_j)` is minus the gradient of
/// [`attractive_loss`] with respect to `y_i`.
#[inline]
pub fn attractive_coefficient(s: f64, a: f64, b: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let sb = s.powf(b);
    -2.0 * a * b * sb / s / (1.0 + a * sb)
}

/// `c` such that `c * (y_i - y_k)` is minus the gradient of
/// [`repulsive_loss`] with respect to `y_i`.
#[inline]
pub fn repulsive_coefficient(s: f64, a: f64, b: f64, gamma: f64) -> f64 {
    let t = s + REPULSION_EPS;
    2.0 * gamma * b / (t * (1.0 + a * t.powf(b)))
}

#[inline]
fn clip(x: f64) -> f64 {
    x.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

#[derive(Debug, Clone, Copy)]
pub struct SgdParams {
    pub a: f64,
    pub b: f64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
    pub initial_lr: f64,
    pub seed: u64,
    /// Sequential, bitwise reproducible updates. Otherwise rows are updated
    /// concurrently without locks and results vary run to run.
    pub deterministic: bool,
}

struct EdgeSchedule {
    tail: usize,
    epochs_per_sample: f64,
    next_sample: f64,
    epochs_per_negative: f64,
    next_negative: f64,
}

struct HeadRow {
    head: usize,
    rng: ChaCha8Rng,
    edges: Vec<EdgeSchedule>,
}

/// Positions stored as `f64` bits so that concurrent rows can write freely.
struct Positions(Vec<[AtomicU64; 2]>);

impl Positions {
    fn new(coords: &[[f64; 2]]) -> Self {
        Self(coords.iter().map(|p| [AtomicU64::new(p[0].to_bits()), AtomicU64::new(p[1].to_bits())]).collect())
    }

    #[inline]
    fn get(&self, i: usize) -> [f64; 2] {
        let p = &self.0[i];
        [f64::from_bits(p[0].load(Ordering::Relaxed)), f64::from_bits(p[1].load(Ordering::Relaxed))]
    }

    #[inline]
    fn set(&self, i: usize, v: [f64; 2]) {
        self.0[i][0].store(v[0].to_bits(), Ordering::Relaxed);
        self.0[i][1].store(v[1].to_bits(), Ordering::Relaxed);
    }

    fn into_coords(self) -> Vec<[f64; 2]> {
        self.0.into_iter().map(|[x, y]| [f64::from_bits(x.into_inner()), f64::from_bits(y.into_inner())]).collect()
    }
}

fn schedule(graph: &FuzzyGraph, params: &SgdParams) -> Vec<HeadRow> {
    let max_w = graph.weights.iter().copied().fold(0.0_f64, f64::max);
    let min_kept = max_w / params.n_epochs.max(1) as f64;
    let nsr = params.negative_sample_rate.max(1) as f64;
    (0..graph.n)
        .map(|head| {
            let edges = graph
                .neighbors(head)
                .filter(|&(_, w)| w >= min_kept)
                .map(|(tail, w)| {
                    let eps = max_w / w;
                    EdgeSchedule {
                        tail,
                        epochs_per_sample: eps,
                        next_sample: eps,
                        epochs_per_negative: eps / nsr,
                        next_negative: eps / nsr,
                    }
                })
                .collect();
            HeadRow { head, rng: rng::stream(params.seed, head as u64), edges }
        })
        .collect()
}

fn non_finite(epoch: usize, head: usize, tail: usize) -> UmapError {
    UmapError::NonFinite { epoch, head, tail }
}

/// One epoch of updates for one head row.
fn run_row(
    row: &mut HeadRow,
    pos: &Positions,
    n: usize,
    epoch: usize,
    alpha: f64,
    params: &SgdParams,
) -> Result<(), UmapError> {
    let (a, b) = (params.a, params.b);
    let e = epoch as f64;
    let head = row.head;
    for edge in &mut row.edges {
        if edge.next_sample > e {
            continue;
        }
        let j = edge.tail;
        let mut cur = pos.get(head);
        let mut other = pos.get(j);
        let diff = [cur[0] - other[0], cur[1] - other[1]];
        let s = diff[0] * diff[0] + diff[1] * diff[1];
        let coeff = attractive_coefficient(s, a, b);
        for d in 0..2 {
            let g = clip(coeff * diff[d]);
            cur[d] += g * alpha;
            other[d] -= g * alpha;
        }
        if !(cur.iter().chain(&other).all(|x| x.is_finite())) {
            return Err(non_finite(epoch, head, j));
        }
        pos.set(head, cur);
        pos.set(j, other);
        edge.next_sample += edge.epochs_per_sample;

        let n_neg = ((e - edge.next_negative) / edge.epochs_per_negative).floor().max(0.0) as usize;
        for _ in 0..n_neg {
            let k = row.rng.random_range(0..n);
            if k == head {
                continue;
            }
            let other = pos.get(k);
            let diff = [cur[0] - other[0], cur[1] - other[1]];
            let s = diff[0] * diff[0] + diff[1] * diff[1];
            let coeff = if s > 0.0 { repulsive_coefficient(s, a, b, REPULSION_STRENGTH) } else { 0.0 };
            for d in 0..2 {
                let g = if coeff > 0.0 { clip(coeff * diff[d]) } else { GRADIENT_CLIP };
                cur[d] += g * alpha;
            }
            if !cur.iter().all(|x| x.is_finite()) {
                return Err(non_finite(epoch, head, k));
            }
        }
        pos.set(head, cur);
        edge.next_negative += n_neg as f64 * edge.epochs_per_negative;
    }
    Ok(())
}

/// Runs `n_epochs` of SGD from `init`. `n_epochs = 0` returns `init`.
pub fn optimize_layout(graph: &FuzzyGraph, init: &[[f64; 2]], params: &SgdParams) -> Result<Vec<[f64; 2]>, UmapError> {
    assert_eq!(graph.n, init.len(), "graph and init disagree on n");
    if params.n_epochs == 0 || graph.n == 0 {
        return Ok(init.to_vec());
    }
    let n = graph.n;
    let pos = Positions::new(init);
    let mut rows = schedule(graph, params);
    for epoch in 0..params.n_epochs {
        let alpha = params.initial_lr * (1.0 - epoch as f64 / params.n_epochs as f64);
        if params.deterministic {
            for row in &mut rows {
                run_row(row, &pos, n, epoch, alpha, params)?;
            }
        } else {
            rows.par_iter_mut().try_for_each(|row| run_row(row, &pos, n, epoch, alpha, params))?;
        }
    }
    Ok(pos.into_coords())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_epochs: usize) -> SgdParams {
        SgdParams {
            a: 1.577,
            b: 0.895,
            n_epochs,
            negative_sample_rate: 5,
            initial_lr: 1.0,
            seed: 9,
            deterministic: true,
        }
    }

    fn small_graph() -> (FuzzyGraph, Vec<[f64; 2]>) {
        let edges: Vec<_> = (0..19).map(|i| (i, i + 1, 1.0 - i as f64 / 40.0)).collect();
        let g = FuzzyGraph::from_symmetric_edges(20, &edges);
        let init = (0..20).map(|i| [(i as f64 * 0.7).sin() * 5.0, (i as f64 * 0.3).cos() * 5.0]).collect();
        (g, init)
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (g, init) = small_graph();
        assert_eq!(optimize_layout(&g, &init, &params(0)).unwrap(), init);
    }

    #[test]
    fn deterministic_runs_match_bitwise() {
        let (g, init) = small_graph();
        let a = optimize_layout(&g, &init, &params(50)).unwrap();
        let b = optimize_layout(&g, &init, &params(50)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn coefficients_vanish_or_stay_finite_at_zero() {
        assert_eq!(attractive_coefficient(0.0, 1.5, 0.9), 0.0);
        assert!(repulsive_coefficient(0.0, 1.5, 0.9, 1.0).is_finite());
    }
}
