//! Core distances and the minimum spanning tree of the mutual-reachability
//! graph.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::neighbors::{self, euclidean};

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(points: &[[f64; 2]], min_samples: usize) -> Vec<f64> {
    neighbors::k_nearest(points, min_samples)
        .into_iter()
        .map(|nn| nn.last().map_or(0.0, |&(d, _)| d))
        .collect()
}

#[inline]
pub fn mutual_reachability(d_ab: f64, core_a: f64, core_b: f64) -> f64 {
    d_ab.max(core_a).max(core_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

impl MstEdge {
    fn pair(&self) -> (usize, usize) {
        (self.u.min(self.v), self.u.max(self.v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mst {
    pub n: usize,
    pub edges: Vec<MstEdge>,
}

impl Mst {
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Edges sorted by weight, then by index pair.
    pub fn sorted_edges(&self) -> Vec<MstEdge> {
        let mut e = self.edges.clone();
        e.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.pair().cmp(&b.pair())));
        e
    }
}

#[inline]
fn better(a: (f64, (usize, usize)), b: (f64, (usize, usize))) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt()
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
/// O(n^2) time, O(n) memory. Ties go to the smaller `(min, max)` index pair.
pub fn build_mst(points: &[[f64; 2]], cores: &[f64]) -> Mst {
    let n = points.len();
    assert_eq!(n, cores.len());
    if n < 2 {
        return Mst { n, edges: Vec::new() };
    }
    let mut in_tree = vec![false; n];
    // best[j] = (weight, tree endpoint) for the cheapest link into the tree
    let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); n];
    let key = |w: f64, from: usize, j: usize| (w, (from.min(j), from.max(j)));
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;

    for _ in 1..n {
        let (cp, cc) = (points[current], cores[current]);
        best.par_iter_mut().enumerate().for_each(|(j, slot)| {
            if in_tree[j] {
                return;
            }
            let d = mutual_reachability(euclidean(&cp, &points[j]), cc, cores[j]);
            if slot.1 == usize::MAX || better(key(d, current, j), key(slot.0, slot.1, j)) {
                *slot = (d, current);
            }
        });
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            if next == usize::MAX || better(key(best[j].0, best[j].1, j), key(best[next].0, best[next].1, next)) {
                next = j;
            }
        }
        let (w, from) = best[next];
        edges.push(MstEdge { u: from, v: next, weight: w });
        in_tree[next] = true;
        current = next;
    }
    Mst { n, edges }
}
