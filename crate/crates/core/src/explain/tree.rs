//! Binary CART classifier with Gini impurity and hard predictions.

use serde::{Deserialize, Serialize};

use crate::preprocess::N_FEATURES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        prediction: u8,
        n: usize,
        n_positive: usize,
    },
    Split {
        feature: usize,
        /// `x[feature] <= threshold` goes left.
        threshold: f64,
        left: usize,
        right: usize,
        n: usize,
        n_positive: usize,
        impurity: f64,
        /// Size-weighted impurity of the two children.
        child_impurity: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

pub fn gini(n: usize, n_positive: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = n_positive as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted: f64,
}

fn best_split(x: &[[f64; N_FEATURES]], y: &[u8], idx: &[usize], min_leaf: usize) -> Option<BestSplit> {
    let n = idx.len();
    let total_pos: usize = idx.iter().map(|&i| y[i] as usize).sum();
    let mut best: Option<BestSplit> = None;
    let mut sorted = idx.to_vec();
    for f in 0..N_FEATURES {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_pos = 0;
        for k in 0..n - 1 {
            left_pos += y[sorted[k]] as usize;
            let nl = k + 1;
            let nr = n - nl;
            let (lo, hi) = (x[sorted[k]][f], x[sorted[k + 1]][f]);
            if lo == hi || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let weighted =
                (nl as f64 * gini(nl, left_pos) + nr as f64 * gini(nr, total_pos - left_pos)) / n as f64;
            if best.as_ref().is_none_or(|b| weighted < b.weighted) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(BestSplit { feature: f, threshold, weighted });
            }
        }
    }
    best
}

impl DecisionTree {
    /// Greedy CART. Splits are chosen by lowest weighted Gini; ties go to the
    /// lower feature index, then the lower threshold. A node becomes a leaf
    /// when pure, at `max_depth`, or when no split leaves `min_leaf` samples
    /// on both sides. Leaves predict the majority class, 0 on ties.
    pub fn fit(x: &[[f64; N_FEATURES]], y: &[u8], params: TreeParams) -> Self {
        assert_eq!(x.len(), y.len());
        let mut tree = Self { nodes: Vec::new() };
        let all: Vec<usize> = (0..x.len()).collect();
        tree.grow(x, y, all, 0, params);
        tree
    }

    fn grow(&mut self, x: &[[f64; N_FEATURES]], y: &[u8], idx: Vec<usize>, depth: usize, params: TreeParams) -> usize {
        let n = idx.len();
        let n_positive: usize = idx.iter().map(|&i| y[i] as usize).sum();
        let id = self.nodes.len();
        let leaf = TreeNode::Leaf { prediction: u8::from(2 * n_positive > n), n, n_positive };
        self.nodes.push(leaf);
        let pure = n_positive == 0 || n_positive == n;
        if pure || depth >= params.max_depth || n < 2 * params.min_leaf.max(1) {
            return id;
        }
        let Some(split) = best_split(x, y, &idx, params.min_leaf.max(1)) else {
            return id;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let left = self.grow(x, y, li, depth + 1, params);
        let right = self.grow(x, y, ri, depth + 1, params);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            n,
            n_positive,
            impurity: gini(n, n_positive),
            child_impurity: split.weighted,
        };
        id
    }

    pub fn predict(&self, row: &[f64; N_FEATURES]) -> u8 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    id = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn accuracy(&self, x: &[[f64; N_FEATURES]], y: &[u8]) -> f64 {
        if x.is_empty() {
            return 1.0;
        }
        let hits = x.iter().zip(y).filter(|(r, &t)| self.predict(r) == t).count();
        hits as f64 / x.len() as f64
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, id: usize) -> usize {
            match &t.nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Gini importance: each split adds `(n_node / n_root) * decrease` to its
    /// feature; the vector is normalised to sum 1, or all zeros when nothing
    /// decreased.
    pub fn feature_importance(&self) -> [f64; N_FEATURES] {
        let mut imp = [0.0; N_FEATURES];
        let n_root = match &self.nodes[0] {
            TreeNode::Leaf { n, .. } | TreeNode::Split { n, .. } => *n as f64,
        };
        for node in &self.nodes {
            if let TreeNode::Split { feature, n, impurity, child_impurity, .. } = node {
                imp[*feature] += (*n as f64 / n_root) * (impurity - child_impurity).max(0.0);
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(vals: &[(usize, f64)]) -> [f64; N_FEATURES] {
        let mut r = [0.0; N_FEATURES];
        for &(k, v) in vals {
            r[k] = v;
        }
        r
    }

    #[test]
    fn separable_on_one_feature() {
        let x: Vec<_> = (0..20).map(|i| row(&[(3, i as f64), (0, (i * 7 % 5) as f64)])).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let t = DecisionTree::fit(&x, &y, TreeParams { max_depth: 4, min_leaf: 1 });
        assert_eq!(t.depth(), 1);
        assert_eq!(t.accuracy(&x, &y), 1.0);
        assert_eq!(t.feature_importance()[3], 1.0);
        match &t.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (3, 9.5)),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = vec![row(&[(0, 0.0), (1, 0.0)]), row(&[(0, 0.0), (1, 1.0)]), row(&[(0, 1.0), (1, 0.0)]), row(&[(0, 1.0), (1, 1.0)])];
        let y = vec![0, 1, 1, 0];
        let d1 = DecisionTree::fit(&x, &y, TreeParams { max_depth: 1, min_leaf: 1 });
        assert!(d1.accuracy(&x, &y) <= 0.5 + 1e-12);
        let d2 = DecisionTree::fit(&x, &y, TreeParams { max_depth: 2, min_leaf: 1 });
        assert_eq!(d2.accuracy(&x, &y), 1.0);
    }

    #[test]
    fn identical_labels_give_stump() {
        let x: Vec<_> = (0..10).map(|i| row(&[(0, i as f64)])).collect();
        let t = DecisionTree::fit(&x, &[1; 10], TreeParams { max_depth: 4, min_leaf: 1 });
        assert!(t.is_stump());
        assert_eq!(t.predict(&x[0]), 1);
        assert_eq!(t.feature_importance(), [0.0; N_FEATURES]);
    }

    #[test]
    fn min_leaf_is_respected() {
        let x: Vec<_> = (0..20).map(|i| row(&[(2, i as f64)])).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 17)).collect();
        let t = DecisionTree::fit(&x, &y, TreeParams { max_depth: 3, min_leaf: 5 });
        for node in &t.nodes {
            if let TreeNode::Leaf { n, .. } = node {
                assert!(*n >= 5);
            }
        }
    }
}
