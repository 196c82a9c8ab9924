//! Exact brute-force Euclidean neighbour search.
//!
//! Rows are fixed-width arrays. Ordering is by distance, then by the smaller
//! index, so results are fully deterministic even with duplicate points.

use rayon::prelude::*;
use std::cmp::Ordering;

#[inline]
pub fn squared_euclidean<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut acc = 0.0;
    for d in 0..D {
        let diff = a[d] - b[d];
        acc += diff * diff;
    }
    acc
}

#[inline]
pub fn euclidean<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest other rows of every row, as `(distance, index)` pairs
/// sorted ascending. Requires `1 <= k < rows.len()`; callers validate.
pub fn k_nearest<const D: usize>(rows: &[[f64; D]], k: usize) -> Vec<Vec<(f64, usize)>> {
    let n = rows.len();
    debug_assert!(k >= 1 && k < n);
    (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |cand: &mut Vec<(f64, usize)>, i| {
                cand.clear();
                cand.extend((0..n).filter(|&j| j != i).map(|j| (euclidean(&rows[i], &rows[j]), j)));
                if k < cand.len() {
                    cand.select_nth_unstable_by(k - 1, by_distance_then_index);
                }
                let mut nn = cand[..k].to_vec();
                nn.sort_unstable_by(by_distance_then_index);
                nn
            },
        )
        .collect()
}

/// Index of the nearest reference row to each query, ties by smaller index.
/// Returns `None` for every query when `reference` is empty.
pub fn nearest_reference<const D: usize>(
    reference: &[[f64; D]],
    queries: &[[f64; D]],
) -> Vec<Option<usize>> {
    queries
        .par_iter()
        .map(|q| {
            let mut best: Option<(f64, usize)> = None;
            for (j, r) in reference.iter().enumerate() {
                let d = squared_euclidean(q, r);
                // strict `<` keeps the smaller index on ties
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            best.map(|(_, j)| j)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points() {
        let rows = [[0.0], [1.0], [3.0]];
        let nn = k_nearest(&rows, 1);
        assert_eq!(nn[0], vec![(1.0, 1)]);
        assert_eq!(nn[1], vec![(1.0, 0)]);
        assert_eq!(nn[2], vec![(2.0, 1)]);
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let rows = [[0.0], [-1.0], [1.0]];
        let nn = k_nearest(&rows, 1);
        assert_eq!(nn[0], vec![(1.0, 1)]);
        let refs = [[1.0], [-1.0]];
        assert_eq!(nearest_reference(&refs, &[[0.0]]), vec![Some(0)]);
    }
}
