//! Spectral initialisation from the normalised graph Laplacian.
//!
//! For each connected component the two leading non-trivial eigenvectors of
//! `A = D^-1/2 W D^-1/2` (equivalently the smallest non-trivial ones of
//! `L = I - A`) give the coordinates. Small components are solved densely;
//! large ones with a restarted Krylov method that deflates the trivial
//! eigenvector `sqrt(d)`.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fuzzy::FuzzyGraph;
use crate::rng;

const DENSE_LIMIT: usize = 200;
const KRYLOV_DIM: usize = 64;
const KEEP: usize = 16;
const MAX_RESTARTS: usize = 100;
const RESIDUAL_TOL: f64 = 1e-5;
const CELL_SPACING: f64 = 3.0;
const TARGET_MAX_ABS: f64 = 10.0;
const JITTER_SD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralInit {
    pub coords: Vec<[f64; 2]>,
    pub n_components: usize,
    /// Components that fell back to random placement.
    pub fallback_components: usize,
    /// Largest final eigen-residual over converged components.
    pub max_residual: f64,
}

/// Connected components, each sorted ascending, ordered by smallest member.
pub fn connected_components(graph: &FuzzyGraph) -> Vec<Vec<usize>> {
    let mut comp = vec![usize::MAX; graph.n];
    let mut out = Vec::new();
    for start in 0..graph.n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for (j, _) in graph.neighbors(i) {
                if comp[j] == usize::MAX {
                    comp[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Normalised adjacency restricted to one component, in local indices.
struct LocalOperator {
    rows: Vec<Vec<(usize, f64)>>,
    /// Unit-norm trivial eigenvector `sqrt(d) / |sqrt(d)|`.
    trivial: Vec<f64>,
}

impl LocalOperator {
    fn new(graph: &FuzzyGraph, members: &[usize]) -> Self {
        let local = |g: usize| members.binary_search(&g).expect("neighbour outside component");
        let deg: Vec<f64> = members.iter().map(|&i| graph.degree(i)).collect();
        let rows = members
            .iter()
            .enumerate()
            .map(|(li, &i)| {
                graph
                    .neighbors(i)
                    .map(|(j, w)| {
                        let lj = local(j);
                        (lj, w / (deg[li] * deg[lj]).sqrt())
                    })
                    .collect()
            })
            .collect();
        let mut trivial: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
        normalize(&mut trivial);
        Self { rows, trivial }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, w)| w * x[j]).sum()).collect()
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                m[(i, j)] = w;
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Two passes of Gram-Schmidt against `basis`.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(w, v);
            axpy(w, -c, v);
        }
    }
}

/// Makes the largest-magnitude entry positive (ties: smaller index).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.first().is_some() && v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// The leading two non-trivial eigenvectors of a small component, solved
/// densely. Missing dimensions (components of size < 3) are zero.
fn dense_component(op: &LocalOperator) -> [Vec<f64>; 2] {
    let n = op.len();
    let mut m = op.dense();
    // push the trivial eigenvalue from 1 to -2, below the spectrum
    let u = &op.trivial;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] -= 3.0 * u[i] * u[j];
        }
    }
    let pairs = sorted_eigen(m);
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for (slot, (_, v)) in out.iter_mut().zip(pairs.into_iter().take(n.saturating_sub(1))) {
        *slot = v;
        fix_sign(slot);
    }
    out
}

/// Converged leading pair from [`krylov_component`].
struct RitzPair2 {
    vectors: [Vec<f64>; 2],
    #[cfg_attr(not(test), allow(dead_code))]
    values: [f64; 2],
    residual: f64,
}

/// Thick-restarted Krylov iteration with Rayleigh-Ritz extraction and full
/// reorthogonalisation. Each restart keeps the leading `KEEP` Ritz vectors.
/// Returns `None` when the leading two residuals do not reach the tolerance
/// within the restart budget.
fn krylov_component(op: &LocalOperator, rng: &mut impl Rng) -> Option<RitzPair2> {
    let n = op.len();
    let deflate = [op.trivial.clone()];
    let dim = KRYLOV_DIM.min(n - 1);
    let keep = KEEP.min(dim / 2).max(2);

    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    orthogonalize(&mut start, &deflate);
    normalize(&mut start);
    // kept Ritz vectors with their images
    let mut seeds: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut next = start;

    let mut last_residual = f64::INFINITY;
    for _ in 0..=MAX_RESTARTS {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut images: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for (v, av) in seeds.drain(..) {
            basis.push(v);
            images.push(av);
        }
        let mut w = next.clone();
        while basis.len() < dim {
            orthogonalize(&mut w, &deflate);
            orthogonalize(&mut w, &basis);
            if normalize(&mut w) < 1e-10 {
                // invariant subspace: Ritz pairs are exact
                break;
            }
            let aw = op.apply(&w);
            basis.push(w);
            images.push(aw.clone());
            w = aw;
        }
        if basis.len() < 2 {
            return None;
        }

        let m = basis.len();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let pairs = sorted_eigen(h);
        let mut ritz: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(keep);
        let mut residual: f64 = 0.0;
        let mut residual_dir = Vec::new();
        for (k, (theta, s)) in pairs.iter().take(keep.min(m)).enumerate() {
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for j in 0..m {
                axpy(&mut y, s[j], &basis[j]);
                axpy(&mut ay, s[j], &images[j]);
            }
            let yn = normalize(&mut y);
            ay.iter_mut().for_each(|x| *x /= yn);
            let mut r = ay.clone();
            axpy(&mut r, -theta, &y);
            if k < 2 {
                let rn = norm(&r);
                if rn > residual {
                    residual = rn;
                    residual_dir = r;
                }
            }
            ritz.push((*theta, y, ay));
        }
        last_residual = residual;
        if residual <= RESIDUAL_TOL || m < dim {
            let mut it = ritz.into_iter();
            let (l1, mut v1, _) = it.next()?;
            let (l2, mut v2, _) = it.next()?;
            fix_sign(&mut v1);
            fix_sign(&mut v2);
            return Some(RitzPair2 { vectors: [v1, v2], values: [l1, l2], residual });
        }
        seeds = ritz.into_iter().map(|(_, y, ay)| (y, ay)).collect();
        next = residual_dir;
    }
    warn!("eigen-iteration did not converge (residual {last_residual:.3e})");
    None
}

/// Spectral layout of the whole graph. Components are normalised to
/// `[-1, 1]` per axis, placed on a shuffled grid, and the result is scaled
/// to max-abs 10 with Gaussian jitter of sd 1e-4.
pub fn spectral_init(graph: &FuzzyGraph, seed: u64) -> SpectralInit {
    let n = graph.n;
    let components = connected_components(graph);
    let mut coords = vec![[0.0; 2]; n];
    let mut fallback = 0;
    let mut max_residual: f64 = 0.0;

    for (c, members) in components.iter().enumerate() {
        let mut crng = rng::stream(seed, c as u64 + 1);
        let op = LocalOperator::new(graph, members);
        let vectors = if members.len() <= DENSE_LIMIT {
            Some(dense_component(&op))
        } else {
            krylov_component(&op, &mut crng).map(|p| {
                max_residual = max_residual.max(p.residual);
                p.vectors
            })
        };
        match vectors {
            Some([v1, v2]) => {
                for (axis, v) in [v1, v2].iter().enumerate() {
                    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                    for (li, &i) in members.iter().enumerate() {
                        coords[i][axis] = if scale > 0.0 { v[li] / scale } else { 0.0 };
                    }
                }
            }
            None => {
                warn!("component {c} ({} points) placed uniformly at random", members.len());
                fallback += 1;
                for &i in members {
                    coords[i] = [crng.random_range(-1.0..=1.0), crng.random_range(-1.0..=1.0)];
                }
            }
        }
    }

    if components.len() > 1 {
        let side = (components.len() as f64).sqrt().ceil() as usize;
        let mut cells: Vec<usize> = (0..side * side).collect();
        cells.shuffle(&mut rng::stream(seed, 0));
        for (members, &cell) in components.iter().zip(&cells) {
            let offset = [(cell % side) as f64 * CELL_SPACING, (cell / side) as f64 * CELL_SPACING];
            for &i in members {
                coords[i][0] += offset[0];
                coords[i][1] += offset[1];
            }
        }
        // centre the grid before scaling
        let half = (side as f64 - 1.0) * CELL_SPACING / 2.0;
        coords.iter_mut().for_each(|p| {
            p[0] -= half;
            p[1] -= half;
        });
    }

    let max_abs = coords.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    let expansion = if max_abs > 0.0 { TARGET_MAX_ABS / max_abs } else { 1.0 };
    let jitter = Normal::new(0.0, JITTER_SD).expect("valid sd");
    let mut jrng = rng::stream(seed, u64::MAX);
    for p in &mut coords {
        for x in p.iter_mut() {
            *x = *x * expansion + jitter.sample(&mut jrng);
        }
    }

    SpectralInit { coords, n_components: components.len(), fallback_components: fallback, max_residual }
}
