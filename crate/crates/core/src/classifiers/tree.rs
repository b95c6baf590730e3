//! Binary decision tree grown greedily by information-gain ratio, with
//! C4.5-style pessimistic-error pruning. The grower is shared with the
//! random forest, which adds feature subsampling and a variance gate.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::ClassLabel;

use super::{DTParams, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        normal: u32,
        abnormal: u32,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(normal: u32, abnormal: u32) -> TreeNode {
        TreeNode::Leaf { normal, abnormal }
    }

    pub fn leaf_for(&self, x: &[f64]) -> (u32, u32) {
        match self {
            TreeNode::Leaf { normal, abnormal } => (*normal, *abnormal),
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.leaf_for(x)
                } else {
                    right.leaf_for(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub root: TreeNode,
}

impl DecisionTreeModel {
    /// Leaf fraction of ABNORMAL training instances.
    pub fn score(&self, x: &[f64]) -> f64 {
        let (normal, abnormal) = self.root.leaf_for(x);
        let total = normal + abnormal;
        if total == 0 {
            0.0
        } else {
            abnormal as f64 / total as f64
        }
    }
}

pub(crate) struct GrowSettings {
    /// Every child of a split must hold at least this many instances.
    pub min_child: usize,
    /// Variance floor below which a feature is not a split candidate at a
    /// node; 0 disables the gate.
    pub min_variance: f64,
    /// Random candidate features per split; 0 means all features.
    pub features_per_split: usize,
}

fn entropy(normal: usize, abnormal: usize) -> f64 {
    let n = (normal + abnormal) as f64;
    if normal == 0 || abnormal == 0 {
        return 0.0;
    }
    let p = normal as f64 / n;
    let q = abnormal as f64 / n;
    -(p * p.log2() + q * q.log2())
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain_ratio: f64,
}

pub(crate) fn grow(
    vectors: &[Vec<f64>],
    labels: &[ClassLabel],
    indices: &[usize],
    settings: &GrowSettings,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> TreeNode {
    let abnormal = indices.iter().filter(|&&i| labels[i].is_abnormal()).count();
    let normal = indices.len() - abnormal;
    if normal == 0 || abnormal == 0 || indices.len() < 2 * settings.min_child {
        return TreeNode::leaf(normal as u32, abnormal as u32);
    }

    let dim = vectors[0].len();
    let candidates: Vec<usize> = match (settings.features_per_split, rng.as_deref_mut()) {
        (k, Some(rng)) if k > 0 && k < dim => {
            let mut sample = rand::seq::index::sample(rng, dim, k).into_vec();
            sample.sort_unstable();
            sample
        }
        _ => (0..dim).collect(),
    };

    let parent_entropy = entropy(normal, abnormal);
    let n = indices.len() as f64;
    let mut best: Option<BestSplit> = None;

    let mut column: Vec<(f64, bool)> = Vec::with_capacity(indices.len());
    for &feature in &candidates {
        column.clear();
        column.extend(indices.iter().map(|&i| (vectors[i][feature], labels[i].is_abnormal())));
        if settings.min_variance > 0.0 {
            let mean = column.iter().map(|(v, _)| v).sum::<f64>() / n;
            let var = column.iter().map(|(v, _)| (v - mean).powi(2)).sum::<f64>() / n;
            if var < settings.min_variance {
                continue;
            }
        }
        column.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_abnormal = 0usize;
        for i in 1..column.len() {
            if column[i - 1].1 {
                left_abnormal += 1;
            }
            if column[i].0 == column[i - 1].0 {
                continue;
            }
            let left_n = i;
            let right_n = column.len() - i;
            if left_n < settings.min_child || right_n < settings.min_child {
                continue;
            }
            let right_abnormal = abnormal - left_abnormal;
            let p_left = left_n as f64 / n;
            let p_right = right_n as f64 / n;
            let gain = parent_entropy
                - p_left * entropy(left_n - left_abnormal, left_abnormal)
                - p_right * entropy(right_n - right_abnormal, right_abnormal);
            if gain <= 1e-12 {
                continue;
            }
            let split_info = -(p_left * p_left.log2() + p_right * p_right.log2());
            let gain_ratio = gain / split_info;
            if best.as_ref().map_or(true, |b| gain_ratio > b.gain_ratio + 1e-15) {
                best = Some(BestSplit {
                    feature,
                    threshold: (column[i - 1].0 + column[i].0) / 2.0,
                    gain_ratio,
                });
            }
        }
    }

    let Some(best) = best else {
        return TreeNode::leaf(normal as u32, abnormal as u32);
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| vectors[i][best.feature] <= best.threshold);
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        left: Box::new(grow(vectors, labels, &left_idx, settings, rng)),
        right: Box::new(grow(vectors, labels, &right_idx, settings, rng)),
    }
}

/// Upper confidence bound on the number of additional errors at a leaf,
/// following the C4.5 pessimistic estimate.
fn add_errs(n: f64, e: f64, cf: f64) -> f64 {
    if e < 1.0 {
        let base = n * (1.0 - cf.powf(1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (add_errs(n, 1.0, cf) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - cf);
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n)
        + z * (f / n - f * f / n + z * z / (4.0 * n * n)).sqrt())
        / (1.0 + z * z / n);
    r * n - e
}

fn estimated_subtree_errors(node: &TreeNode, cf: f64) -> f64 {
    match node {
        TreeNode::Leaf { normal, abnormal } => {
            let n = (*normal + *abnormal) as f64;
            let e = (*normal).min(*abnormal) as f64;
            e + add_errs(n, e, cf)
        }
        TreeNode::Split { left, right, .. } => {
            estimated_subtree_errors(left, cf) + estimated_subtree_errors(right, cf)
        }
    }
}

fn node_counts(node: &TreeNode) -> (u32, u32) {
    match node {
        TreeNode::Leaf { normal, abnormal } => (*normal, *abnormal),
        TreeNode::Split { left, right, .. } => {
            let (ln, la) = node_counts(left);
            let (rn, ra) = node_counts(right);
            (ln + rn, la + ra)
        }
    }
}

/// Bottom-up subtree replacement: collapse a split whenever the pessimistic
/// error of the collapsed leaf does not exceed the subtree's.
fn prune(node: &mut TreeNode, cf: f64) {
    if let TreeNode::Split { left, right, .. } = node {
        prune(left, cf);
        prune(right, cf);
        let (normal, abnormal) = node_counts(node);
        let n = (normal + abnormal) as f64;
        let e = normal.min(abnormal) as f64;
        let as_leaf = e + add_errs(n, e, cf);
        if as_leaf <= estimated_subtree_errors(node, cf) + 0.1 {
            *node = TreeNode::Leaf { normal, abnormal };
        }
    }
}

pub(crate) fn train(data: &Dataset, params: &DTParams) -> DecisionTreeModel {
    let indices: Vec<usize> = (0..data.len()).collect();
    let settings = GrowSettings {
        min_child: params.min_instances_m,
        min_variance: 0.0,
        features_per_split: 0,
    };
    let mut root = grow(&data.vectors, &data.labels, &indices, &settings, &mut None);
    prune(&mut root, params.confidence_c);
    DecisionTreeModel { root }
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn add_errs_matches_known_values() {
        // e = 0: N (1 - CF^(1/N))
        assert!((add_errs(2.0, 0.0, 0.25) - 1.0).abs() < 1e-12);
        // interpolation below one error stays between the endpoints
        let half = add_errs(10.0, 0.5, 0.25);
        assert!(half > add_errs(10.0, 0.0, 0.25) && half < add_errs(10.0, 1.0, 0.25));
        // saturated leaves cannot gain errors
        assert_eq!(add_errs(4.0, 4.0, 0.25), 0.0);
    }

    #[test]
    fn entropy_bounds() {
        assert_eq!(entropy(5, 0), 0.0);
        assert!((entropy(5, 5) - 1.0).abs() < 1e-12);
    }
}
