//! Excess-of-mass cluster selection and flat labelling.

use super::condense::CondensedTree;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub stabilities: Vec<f64>,
    pub selected: Vec<bool>,
}

impl Selection {
    pub fn selected_ids(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }

    pub fn total_stability(&self) -> f64 {
        self.selected_ids().iter().map(|&i| self.stabilities[i]).sum()
    }
}

/// Bottom-up selection: a node is kept when its own stability strictly
/// exceeds the best total of its descendants. The root only competes when
/// `allow_single_cluster` is set.
pub fn select_clusters(tree: &CondensedTree, allow_single_cluster: bool) -> Selection {
    let stabilities = tree.stabilities();
    let m = tree.nodes.len();
    let mut selected = vec![false; m];
    let mut best = vec![0.0; m];
    let children: Vec<Vec<usize>> = (0..m).map(|i| tree.children(i)).collect();
    // children always have larger ids than their parent
    for id in (0..m).rev() {
        let child_sum: f64 = children[id].iter().map(|&c| best[c]).sum();
        let eligible = id != 0 || allow_single_cluster;
        if eligible && stabilities[id] > child_sum {
            selected[id] = true;
            best[id] = stabilities[id];
            let mut stack = children[id].clone();
            while let Some(c) = stack.pop() {
                selected[c] = false;
                stack.extend(&children[c]);
            }
        } else {
            best[id] = child_sum;
        }
    }
    Selection { stabilities, selected }
}

/// Raw labels: the selected ancestor-or-self of each point's exit cluster,
/// or -1. Labels are condensed-tree node ids at this stage.
pub fn raw_labels(tree: &CondensedTree, sel: &Selection) -> Vec<i64> {
    let owner: Vec<Option<usize>> = (0..tree.nodes.len())
        .map(|mut id| loop {
            if sel.selected[id] {
                return Some(id);
            }
            match tree.nodes[id].parent {
                Some(p) => id = p,
                None => return None,
            }
        })
        .collect();
    tree.points.iter().map(|p| owner[p.cluster].map_or(-1, |c| c as i64)).collect()
}

/// Renumbers to `0..K` by descending size; ties by smallest member index.
pub fn renumber_by_size(raw: &[i64]) -> Vec<i32> {
    use std::collections::BTreeMap;
    // label -> (size, first member)
    let mut stats: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (i, &l) in raw.iter().enumerate() {
        if l >= 0 {
            let e = stats.entry(l).or_insert((0, i));
            e.0 += 1;
        }
    }
    let mut order: Vec<(i64, usize, usize)> = stats.into_iter().map(|(l, (s, f))| (l, s, f)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let map: BTreeMap<i64, i32> = order.iter().enumerate().map(|(k, &(l, _, _))| (l, k as i32)).collect();
    raw.iter().map(|l| if *l < 0 { -1 } else { map[l] }).collect()
}
