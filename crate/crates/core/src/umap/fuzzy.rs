//! Exact kNN graph, per-point smooth-kNN calibration and the symmetric fuzzy
//! membership graph built from them.

use log::warn;
use serde::{Deserialize, Serialize};

use super::UmapError;
use crate::neighbors;

/// For each point: `k` neighbour indices and distances, ascending, no self.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnGraph {
    pub k: usize,
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Exact Euclidean kNN, ties broken by smaller index. Requires `2 <= k < n`.
pub fn knn_exact<const D: usize>(rows: &[[f64; D]], k: usize) -> Result<KnnGraph, UmapError> {
    let n = rows.len();
    if k < 2 || k >= n {
        return Err(UmapError::InvalidNeighbors { k, n });
    }
    let (indices, distances) = neighbors::k_nearest(rows, k)
        .into_iter()
        .map(|nn| nn.into_iter().map(|(d, j)| (j, d)).unzip())
        .unzip();
    Ok(KnnGraph { k, indices, distances })
}

/// Absolute floor used when every neighbour distance is zero.
const SIGMA_ABS_FLOOR: f64 = 1e-12;
const SIGMA_FLOOR_FACTOR: f64 = 1e-3;
const SIGMA_CEIL_FACTOR: f64 = 1e3;
const BISECTION_TOL: f64 = 1e-9;
const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothKnn {
    pub rho: f64,
    pub sigma: f64,
    /// `|sum_i exp(-max(d_i - rho, 0) / sigma) - log2(k)|`
    pub residual: f64,
    /// The target was unattainable inside the sigma bracket.
    pub clamped: bool,
}

fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Calibrates `(rho, sigma)` for one point so that the membership strengths
/// of its `k` neighbours sum to `log2(k)`.
///
/// `rho` is the smallest positive distance. `sigma` is bisected inside
/// `[1e-3, 1e3] * mean(d)`; if the target lies outside that bracket sigma is
/// clamped to the nearer end and `clamped` is set.
pub fn smooth_knn(distances: &[f64]) -> SmoothKnn {
    let k = distances.len();
    debug_assert!(k >= 1);
    let target = (k as f64).log2();
    let rho = distances.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let mean = distances.iter().sum::<f64>() / k as f64;
    if mean <= 0.0 {
        warn!("all {k} neighbour distances are zero; sigma clamped to floor");
    }
    let lo_bound = (SIGMA_FLOOR_FACTOR * mean).max(SIGMA_ABS_FLOOR);
    let hi_bound = (SIGMA_CEIL_FACTOR * mean).max(SIGMA_ABS_FLOOR);
    let finish = |sigma: f64, clamped: bool| SmoothKnn {
        rho,
        sigma,
        residual: (membership_sum(distances, rho, sigma) - target).abs(),
        clamped,
    };

    // The sum increases monotonically with sigma.
    if membership_sum(distances, rho, lo_bound) >= target {
        let at_floor = finish(lo_bound, true);
        return SmoothKnn { clamped: at_floor.residual > BISECTION_TOL, ..at_floor };
    }
    if membership_sum(distances, rho, hi_bound) <= target {
        let at_ceil = finish(hi_bound, true);
        return SmoothKnn { clamped: at_ceil.residual > BISECTION_TOL, ..at_ceil };
    }

    let (mut lo, mut hi) = (lo_bound, hi_bound);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let val = membership_sum(distances, rho, mid);
        if (val - target).abs() <= BISECTION_TOL {
            break;
        }
        if val > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    finish(mid, false)
}

/// Probabilistic t-conorm `a + b - a*b`.
#[inline]
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    if a == 1.0 || b == 1.0 {
        // exact; `1 + b - b` can round below 1
        return 1.0;
    }
    a + b - a * b
}

/// Sparse symmetric membership graph in CSR form. Only positive weights are
/// stored; the diagonal is always empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyGraph {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub rhos: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl FuzzyGraph {
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(pos) => self.weights[r.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Number of stored (directed) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors(i).map(|(_, w)| w).sum()
    }

    /// Builds a graph from arbitrary symmetric entries; used by tests and
    /// when reloading.
    pub fn from_symmetric_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i != j && w > 0.0 {
                rows[i].push((j, w));
                rows[j].push((i, w));
            }
        }
        Self::from_rows(rows, vec![0.0; n], vec![1.0; n])
    }

    fn from_rows(mut rows: Vec<Vec<(usize, f64)>>, rhos: Vec<f64>, sigmas: Vec<f64>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            row.dedup_by_key(|&mut (j, _)| j);
            for &(j, w) in row.iter() {
                indices.push(j);
                weights.push(w);
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, weights, rhos, sigmas }
    }
}

/// Directed memberships `exp(-max(d - rho_i, 0) / sigma_i)` symmetrised with
/// the probabilistic t-conorm.
pub fn fuzzy_simplicial_set(knn: &KnnGraph) -> FuzzyGraph {
    let n = knn.len();
    let calib: Vec<SmoothKnn> = knn.distances.iter().map(|d| smooth_knn(d)).collect();
    let clamped = calib.iter().filter(|c| c.clamped).count();
    if clamped > 0 {
        warn!("{clamped} of {n} points had sigma clamped during calibration");
    }
    let directed: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let SmoothKnn { rho, sigma, .. } = calib[i];
            knn.indices[i]
                .iter()
                .zip(&knn.distances[i])
                .map(|(&j, &d)| (j, (-(d - rho).max(0.0) / sigma).exp()))
                .collect()
        })
        .collect();
    let directed_weight = |i: usize, j: usize| -> f64 {
        directed[i].iter().find(|&&(t, _)| t == j).map_or(0.0, |&(_, w)| w)
    };

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, a) in &directed[i] {
            let w = fuzzy_union(a, directed_weight(j, i));
            if w > 0.0 {
                rows[i].push((j, w));
                rows[j].push((i, w));
            }
        }
    }
    FuzzyGraph::from_rows(
        rows,
        calib.iter().map(|c| c.rho).collect(),
        calib.iter().map(|c| c.sigma).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_collinear_and_duplicates() {
        let rows = [[0.0], [1.0], [3.0], [7.0]];
        let g = knn_exact(&rows, 2).unwrap();
        assert_eq!(g.indices[0], vec![1, 2]);
        assert_eq!(g.indices[2], vec![1, 0]);
        let g = knn_exact(&[[0.0], [1.0], [3.0]], 2).unwrap();
        assert_eq!(g.indices[1], vec![0, 2]);

        let dup = [[2.0, 2.0], [2.0, 2.0], [5.0, 5.0]];
        let g = knn_exact(&dup, 2).unwrap();
        assert_eq!((g.indices[0][0], g.distances[0][0]), (1, 0.0));
        assert_eq!((g.indices[1][0], g.distances[1][0]), (0, 0.0));
    }

    #[test]
    fn knn_rejects_bad_k() {
        let rows = [[0.0], [1.0], [3.0]];
        assert!(knn_exact(&rows, 3).is_err());
        assert!(knn_exact(&rows, 1).is_err());
    }

    #[test]
    fn smooth_knn_one_to_four() {
        let s = smooth_knn(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.rho, 1.0);
        assert!(!s.clamped);
        assert!(s.residual <= 1e-5);
        assert!((s.sigma - 1.64).abs() < 0.01, "sigma {}", s.sigma);
    }

    #[test]
    fn smooth_knn_equal_distances_clamp_to_floor() {
        let s = smooth_knn(&[2.0; 5]);
        assert!(s.clamped);
        assert_eq!(s.sigma, 2.0 * 1e-3);
        assert_eq!(s.rho, 2.0);
    }

    #[test]
    fn smooth_knn_unsolvable_pair() {
        let s = smooth_knn(&[1.0, 1.0 + 1e-3]);
        assert!(s.clamped);
        assert!((s.sigma - 1e-3 * (1.0 + 0.5e-3)).abs() < 1e-15);
    }

    #[test]
    fn smooth_knn_all_zero() {
        let s = smooth_knn(&[0.0, 0.0, 0.0]);
        assert_eq!(s.rho, 0.0);
        assert!(s.clamped);
        assert!(s.sigma > 0.0);
    }

    #[test]
    fn t_conorm() {
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
        assert_eq!(fuzzy_union(0.0, 0.3), 0.3);
    }

    #[test]
    fn nearest_neighbour_gets_full_membership() {
        let rows: Vec<[f64; 2]> =
            (0..30).map(|i| [(i as f64 * 0.37).sin() * 3.0, (i as f64 * 1.3).cos() * 2.0]).collect();
        let knn = knn_exact(&rows, 5).unwrap();
        let g = fuzzy_simplicial_set(&knn);
        for i in 0..rows.len() {
            let s = smooth_knn(&knn.distances[i]);
            let j = knn.indices[i][0];
            let v = (-(knn.distances[i][0] - s.rho).max(0.0) / s.sigma).exp();
            assert_eq!(v, 1.0);
            // symmetric weight is at least the directed one
            assert_eq!(g.weight(i, j), 1.0);
        }
    }
}
