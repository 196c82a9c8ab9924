//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code it checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Full sort of every row's distances; ties by index.
pub fn brute_knn<const D: usize>(rows: &[[f64; D]], k: usize) -> Vec<Vec<(f64, usize)>> {
    (0..rows.len())
        .map(|i| {
            let mut all: Vec<(f64, usize)> =
                (0..rows.len()).filter(|&j| j != i).map(|j| (dist(&rows[i], &rows[j]), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            all.truncate(k);
            all
        })
        .collect()
}

pub fn brute_core_distances(points: &[[f64; 2]], min_samples: usize) -> Vec<f64> {
    brute_knn(points, min_samples).into_iter().map(|nn| nn[min_samples - 1].0).collect()
}

/// Kruskal over the complete mutual-reachability graph. Returns the chosen
/// edge weights in ascending order.
pub fn kruskal_weights(points: &[[f64; 2]], cores: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let w = dist(&points[i], &points[j]).max(cores[i]).max(cores[j]);
            edges.push((w, i, j));
        }
    }
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    let mut out = Vec::with_capacity(n - 1);
    for (w, i, j) in edges {
        let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            out.push(w);
        }
    }
    out
}

/// Least-squares `(a, b)` by exhaustive grid search with three rounds of
/// local refinement, on its own 300-point grid over `[0, 3 * spread]`.
pub fn grid_fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> =
        xs.iter().map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() }).collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter().zip(&ys).map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2)).sum()
    };
    let (mut a0, mut a1, mut b0, mut b1) = (0.05, 5.0, 0.2, 2.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..4 {
        let steps = 200;
        for i in 0..=steps {
            let a = a0 + (a1 - a0) * i as f64 / steps as f64;
            for j in 0..=steps {
                let b = b0 + (b1 - b0) * j as f64 / steps as f64;
                let e = sse(a, b);
                if e < best.0 {
                    best = (e, a, b);
                }
            }
        }
        let (da, db) = ((a1 - a0) / 20.0, (b1 - b0) / 20.0);
        (a0, a1, b0, b1) = (best.1 - da, best.1 + da, best.2 - db, best.2 + db);
    }
    (best.1, best.2)
}

/// Sorted random distance profile of length `k` with distinct values.
pub fn distance_profile(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let scale = 10f64.powf(r.random_range(-2.0..2.0));
    let mut d: Vec<f64> = (0..k).map(|_| scale * r.random_range(0.01..1.0)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// Adjusted Rand index from the pair-counting definition.
pub fn ari_oracle(a: &[i64], b: &[i64]) -> f64 {
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut ra: BTreeMap<i64, f64> = BTreeMap::new();
    let mut rb: BTreeMap<i64, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(a.len() as f64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Points of a Vogel spiral: an evenly filled disc with no density valleys.
pub fn sunflower(n: usize, radius: f64) -> Vec<[f64; 2]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let r = radius * ((i as f64 + 0.5) / n as f64).sqrt();
            let t = i as f64 * golden;
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

pub fn gaussian_blob(r: &mut ChaCha8Rng, n: usize, centre: [f64; 2], sd: f64) -> Vec<[f64; 2]> {
    use rand_distr::{Distribution, Normal};
    let g = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| [centre[0] + g.sample(r), centre[1] + g.sample(r)]).collect()
}

/// Walks a directory and returns relative path -> bytes.
pub fn tree_bytes(root: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
