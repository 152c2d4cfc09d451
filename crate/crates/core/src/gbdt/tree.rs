//! Depth-limited regression trees grown by exact greedy search over all
//! midpoints between consecutive distinct feature values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum TreeNode<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf { value: T },
}

/// A regression tree stored as a node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn from_nodes(nodes: Vec<TreeNode<T>>) -> Option<Self> {
        let n = nodes.len();
        let valid = n > 0
            && nodes.iter().enumerate().all(|(i, node)| match *node {
                TreeNode::Split { left, right, .. } => left > i && right > i && left < n && right < n,
                TreeNode::Leaf { .. } => true,
            });
        valid.then_some(Self { nodes })
    }

    pub fn leaf(value: T) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn predict(&self, row: &[T]) -> T {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Number of levels below the root.
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}

/// Parent SSE minus children SSE for a split of `(count, sum)` into a left
/// part and the remainder.
#[inline]
pub fn split_gain<T: Scalar>(n_left: usize, sum_left: T, n: usize, sum: T) -> T {
    let n_right = n - n_left;
    let sum_right = sum - sum_left;
    sum_left * sum_left / T::from_count(n_left) + sum_right * sum_right / T::from_count(n_right)
        - sum * sum / T::from_count(n)
}

/// Threshold strictly between two distinct consecutive values `a < b`.
#[inline]
pub fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let mid = a / T::lit(2.0) + b / T::lit(2.0);
    if mid >= b || mid < a {
        a
    } else {
        mid
    }
}

/// Gains at or below this are treated as rounding noise.
#[inline]
fn min_gain<T: Scalar>(sum_sq: T) -> T {
    T::epsilon() * T::lit(64.0) * sum_sq
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate<T> {
    pub threshold: T,
    pub gain: T,
}

/// Best variance-reduction split of `residuals` on one column, honoring
/// `min_samples_leaf`. Midpoints are scanned in increasing order and only a
/// strictly larger gain replaces the incumbent, so the lowest threshold wins
/// ties. Returns `None` when no split has positive gain.
pub fn best_split<T: Scalar>(
    residuals: &[T],
    values: &[T],
    min_samples_leaf: usize,
) -> Option<SplitCandidate<T>> {
    let n = residuals.len();
    if n < 2 || values.len() != n {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let sum: T = residuals.iter().copied().sum();
    let sum_sq: T = residuals.iter().map(|&r| r * r).sum();
    let leaf_min = min_samples_leaf.max(1);
    let mut best: Option<SplitCandidate<T>> = None;
    let mut sum_left = T::zero();
    for k in 0..n - 1 {
        sum_left = sum_left + residuals[order[k]];
        let (a, b) = (values[order[k]], values[order[k + 1]]);
        let n_left = k + 1;
        if a == b || n_left < leaf_min || n - n_left < leaf_min {
            continue;
        }
        let gain = split_gain(n_left, sum_left, n, sum);
        if gain > min_gain(sum_sq) && best.is_none_or(|c| gain > c.gain) {
            best = Some(SplitCandidate {
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
    best
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

/// Column-major copy of the selected features, each sorted ascending by
/// value with ties in row order.
pub(crate) struct SortedColumns<T> {
    pub features: Vec<usize>,
    pub columns: Vec<Vec<(u32, T)>>,
}

impl<T: Scalar> SortedColumns<T> {
    pub fn new(x: &crate::featurize::FeatureMatrix<T>, features: Vec<usize>) -> Self {
        let columns = features
            .par_iter()
            .map(|&f| {
                let mut col: Vec<(u32, T)> =
                    x.column(f).enumerate().map(|(i, v)| (i as u32, v)).collect();
                col.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite feature values"));
                col
            })
            .collect();
        Self { features, columns }
    }
}

const NO_SLOT: u32 = u32::MAX;

struct Pending<T> {
    node: usize,
    depth: usize,
    count: usize,
    sum: T,
    sum_sq: T,
    hess: T,
}

#[derive(Clone, Copy)]
struct Best<T> {
    feature: usize,
    threshold: T,
    gain: T,
}

/// Grows one tree on the rows with `in_sample[i]`, fitting `residuals` by
/// variance reduction and assigning Newton leaf values
/// `Σ residual / max(Σ hessian, 1e-12)`.
pub(crate) fn grow_tree<T: Scalar>(
    sorted: &SortedColumns<T>,
    row_value: impl Fn(usize, usize) -> T,
    residuals: &[T],
    hessians: &[T],
    in_sample: &[bool],
    params: &TreeParams,
) -> Tree<T> {
    let n = residuals.len();
    let mut slot_of = vec![NO_SLOT; n];
    let mut root = Pending {
        node: 0,
        depth: 0,
        count: 0,
        sum: T::zero(),
        sum_sq: T::zero(),
        hess: T::zero(),
    };
    for i in (0..n).filter(|&i| in_sample[i]) {
        slot_of[i] = 0;
        root.count += 1;
        root.sum = root.sum + residuals[i];
        root.sum_sq = root.sum_sq + residuals[i] * residuals[i];
        root.hess = root.hess + hessians[i];
    }
    let mut nodes = vec![TreeNode::Leaf { value: T::zero() }];
    let mut frontier = vec![root];
    let leaf_min = params.min_samples_leaf.max(1);
    let hess_floor = T::lit(1e-12);

    while !frontier.is_empty() {
        let splittable: Vec<bool> = frontier
            .iter()
            .map(|p| {
                p.depth < params.max_depth
                    && p.count >= params.min_samples_split.max(2)
                    && p.count >= 2 * leaf_min
            })
            .collect();

        let per_feature: Vec<Vec<Option<Best<T>>>> = if splittable.iter().any(|&s| s) {
            (0..sorted.features.len())
                .into_par_iter()
                .map(|k| scan_feature(sorted, k, &slot_of, residuals, &frontier, &splittable, leaf_min))
                .collect()
        } else {
            Vec::new()
        };

        // Features are visited in ascending index order and only strictly
        // larger gains replace the incumbent.
        let mut chosen: Vec<Option<Best<T>>> = vec![None; frontier.len()];
        for cands in &per_feature {
            for (slot, cand) in cands.iter().enumerate() {
                if let Some(c) = cand {
                    if chosen[slot].is_none_or(|b| c.gain > b.gain) {
                        chosen[slot] = Some(*c);
                    }
                }
            }
        }

        let mut next = Vec::new();
        let mut child_slot = vec![(NO_SLOT, NO_SLOT); frontier.len()];
        for (slot, pending) in frontier.iter().enumerate() {
            match chosen[slot] {
                Some(best) => {
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { value: T::zero() });
                    nodes.push(TreeNode::Leaf { value: T::zero() });
                    nodes[pending.node] = TreeNode::Split {
                        feature: best.feature,
                        threshold: best.threshold,
                        left,
                        right: left + 1,
                    };
                    child_slot[slot] = (next.len() as u32, next.len() as u32 + 1);
                    for node in [left, left + 1] {
                        next.push(Pending {
                            node,
                            depth: pending.depth + 1,
                            count: 0,
                            sum: T::zero(),
                            sum_sq: T::zero(),
                            hess: T::zero(),
                        });
                    }
                }
                None => {
                    nodes[pending.node] = TreeNode::Leaf {
                        value: pending.sum / pending.hess.max(hess_floor),
                    };
                }
            }
        }

        for i in 0..n {
            let slot = slot_of[i];
            if slot == NO_SLOT {
                continue;
            }
            let slot = slot as usize;
            let Some(best) = chosen[slot] else {
                slot_of[i] = NO_SLOT;
                continue;
            };
            let (l, r) = child_slot[slot];
            let target = if row_value(i, best.feature) <= best.threshold { l } else { r };
            slot_of[i] = target;
            let p = &mut next[target as usize];
            p.count += 1;
            p.sum = p.sum + residuals[i];
            p.sum_sq = p.sum_sq + residuals[i] * residuals[i];
            p.hess = p.hess + hessians[i];
        }
        frontier = next;
    }
    Tree { nodes }
}

fn scan_feature<T: Scalar>(
    sorted: &SortedColumns<T>,
    k: usize,
    slot_of: &[u32],
    residuals: &[T],
    frontier: &[Pending<T>],
    splittable: &[bool],
    leaf_min: usize,
) -> Vec<Option<Best<T>>> {
    let m = frontier.len();
    let mut count = vec![0usize; m];
    let mut sum = vec![T::zero(); m];
    let mut prev = vec![T::zero(); m];
    let mut best: Vec<Option<Best<T>>> = vec![None; m];
    let feature = sorted.features[k];
    for &(row, v) in &sorted.columns[k] {
        let slot = slot_of[row as usize];
        if slot == NO_SLOT || !splittable[slot as usize] {
            continue;
        }
        let s = slot as usize;
        let p = &frontier[s];
        if count[s] >= leaf_min && v > prev[s] && p.count - count[s] >= leaf_min {
            let gain = split_gain(count[s], sum[s], p.count, p.sum);
            if gain > min_gain(p.sum_sq) && best[s].is_none_or(|b| gain > b.gain) {
                best[s] = Some(Best {
                    feature,
                    threshold: midpoint(prev[s], v),
                    gain,
                });
            }
        }
        count[s] += 1;
        sum[s] = sum[s] + residuals[row as usize];
        prev[s] = v;
    }
    best
}
