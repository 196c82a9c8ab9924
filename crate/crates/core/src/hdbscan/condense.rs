//! Single-linkage dendrogram and its condensed form.

use serde::{Deserialize, Serialize};

use super::mst::Mst;

/// Lambda for a merge at distance `w`; zero distances map to a large finite
/// value so the tree stays finite.
#[inline]
pub fn lambda_of(w: f64) -> f64 {
    1.0 / w.max(1e-12)
}

/// Binary merge tree over `n` points. Leaves are `0..n`; internal node
/// `n + i` is the i-th merge.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    /// `(left, right, distance, size)` per merge, ascending distance.
    pub merges: Vec<(usize, usize, f64, usize)>,
}

struct UnionFind {
    parent: Vec<usize>,
    /// Dendrogram node currently representing each root.
    node: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), node: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

pub fn single_linkage(mst: &Mst) -> Dendrogram {
    let n = mst.n;
    let mut uf = UnionFind::new(n);
    let mut sizes = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in mst.sorted_edges() {
        let (ru, rv) = (uf.find(e.u), uf.find(e.v));
        debug_assert_ne!(ru, rv, "MST contains a cycle");
        let (left, right) = (uf.node[ru], uf.node[rv]);
        let size = sizes[ru] + sizes[rv];
        merges.push((left, right, e.weight, size));
        uf.parent[rv] = ru;
        sizes[ru] = size;
        uf.node[ru] = n + merges.len() - 1;
    }
    Dendrogram { n, merges }
}

/// A cluster node of the condensed tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    pub size: usize,
}

/// The moment a point leaves the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointExit {
    pub cluster: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub min_cluster_size: usize,
    pub nodes: Vec<ClusterNode>,
    /// Indexed by point.
    pub points: Vec<PointExit>,
}

impl CondensedTree {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn children(&self, id: usize) -> Vec<usize> {
        self.nodes.iter().filter(|c| c.parent == Some(id)).map(|c| c.id).collect()
    }

    /// Excess of mass per node: each point that exits contributes
    /// `lambda_p - lambda_birth`, each child cluster contributes
    /// `size * (lambda_split - lambda_birth)`.
    pub fn stabilities(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nodes.len()];
        for p in &self.points {
            s[p.cluster] += p.lambda - self.nodes[p.cluster].lambda_birth;
        }
        for c in &self.nodes {
            if let Some(parent) = c.parent {
                s[parent] += c.size as f64 * (c.lambda_birth - self.nodes[parent].lambda_birth);
            }
        }
        s
    }

    /// Whether `id` is `ancestor` or one of its descendants.
    pub fn is_descendant(&self, mut id: usize, ancestor: usize) -> bool {
        loop {
            if id == ancestor {
                return true;
            }
            match self.nodes[id].parent {
                Some(p) => id = p,
                None => return false,
            }
        }
    }
}

fn leaves_under(d: &Dendrogram, node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < d.n {
            out.push(x);
        } else {
            let (l, r, _, _) = d.merges[x - d.n];
            stack.push(r);
            stack.push(l);
        }
    }
}

/// Walks the dendrogram from the root. A merge is a true split iff both
/// sides hold at least `min_cluster_size` points; otherwise the smaller
/// side's points fall out of the current cluster at that lambda.
pub fn condense_tree(mst: &Mst, min_cluster_size: usize) -> CondensedTree {
    let d = single_linkage(mst);
    let n = d.n;
    let mut nodes = vec![ClusterNode { id: 0, parent: None, lambda_birth: 0.0, size: n }];
    let mut points = vec![PointExit { cluster: 0, lambda: 0.0 }; n];
    if n < 2 {
        return CondensedTree { min_cluster_size, nodes, points };
    }
    let size_of = |x: usize| if x < n { 1 } else { d.merges[x - n].3 };
    let root = 2 * n - 2;
    // (dendrogram node, condensed cluster) pairs still to expand
    let mut stack = vec![(root, 0usize)];
    let mut fallen = Vec::new();
    while let Some((node, cluster)) = stack.pop() {
        if node < n {
            // a single point reached as a continuing cluster
            points[node] = PointExit { cluster, lambda: nodes[cluster].lambda_birth };
            continue;
        }
        let (left, right, dist, _) = d.merges[node - n];
        let lambda = lambda_of(dist);
        let (ls, rs) = (size_of(left), size_of(right));
        let big_l = ls >= min_cluster_size;
        let big_r = rs >= min_cluster_size;
        if big_l && big_r {
            for child in [left, right] {
                let id = nodes.len();
                nodes.push(ClusterNode { id, parent: Some(cluster), lambda_birth: lambda, size: size_of(child) });
                stack.push((child, id));
            }
        } else {
            for (child, big) in [(left, big_l), (right, big_r)] {
                if big {
                    stack.push((child, cluster));
                } else {
                    fallen.clear();
                    leaves_under(&d, child, &mut fallen);
                    for &p in &fallen {
                        points[p] = PointExit { cluster, lambda };
                    }
                }
            }
        }
    }
    // ids by creation order are a DFS order; renumber breadth-first so
    // parents always precede children and siblings are adjacent
    renumber_bfs(CondensedTree { min_cluster_size, nodes, points })
}

fn renumber_bfs(tree: CondensedTree) -> CondensedTree {
    let mut order = vec![0usize];
    let mut head = 0;
    while head < order.len() {
        let id = order[head];
        head += 1;
        order.extend(tree.children(id));
    }
    let mut new_id = vec![0; tree.nodes.len()];
    for (k, &old) in order.iter().enumerate() {
        new_id[old] = k;
    }
    let nodes = order
        .iter()
        .enumerate()
        .map(|(k, &old)| {
            let c = &tree.nodes[old];
            ClusterNode { id: k, parent: c.parent.map(|p| new_id[p]), lambda_birth: c.lambda_birth, size: c.size }
        })
        .collect();
    let points = tree.points.iter().map(|p| PointExit { cluster: new_id[p.cluster], lambda: p.lambda }).collect();
    CondensedTree { min_cluster_size: tree.min_cluster_size, nodes, points }
}
