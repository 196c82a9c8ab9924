//! Agreement between two labelings.

use std::collections::HashMap;
use std::hash::Hash;

fn comb2(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Adjusted Rand index via the contingency table. Returns 1.0 when both
/// labelings are trivially identical partitions (e.g. fewer than 2 items).
pub fn adjusted_rand_index<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as u64;
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pair-counting definition, O(n^2).
    fn ari_pairs(a: &[i32], b: &[i32]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total: f64 = both + only_a + only_b + neither;
        let expected = (both + only_a) * (both + only_b) / total;
        let max = 0.5 * ((both + only_a) + (both + only_b));
        (both - expected) / (max - expected)
    }

    #[test]
    fn matches_pair_counting() {
        let a = [0, 0, 1, 1, 2, 2, 2, 0, 1, 3];
        let b = [1, 1, 0, 0, 2, 2, 0, 1, 1, 3];
        assert!((adjusted_rand_index(&a, &b) - ari_pairs(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn relabelled_partition_scores_one() {
        let a = [0, 0, 1, 1, 2];
        let b = ["x", "x", "y", "y", "z"];
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
    }
}
