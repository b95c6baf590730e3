//! Bagged ensemble of unpruned trees. Each tree draws a bootstrap sample
//! and considers a random feature subset per split; prediction is a
//! majority vote with ties broken toward NORMAL. Each tree's RNG stream is
//! seeded as seed + tree index, so a parallel build would give the same
//! forest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ClassLabel;

use super::tree::{grow, DecisionTreeModel, GrowSettings};
use super::{Dataset, RFParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTreeModel>,
    pub rng_seed: u64,
}

impl RandomForestModel {
    /// Fraction of trees voting ABNORMAL.
    pub fn score(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.score(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

pub(crate) fn train(data: &Dataset, params: &RFParams) -> (RandomForestModel, Option<f64>) {
    let n = data.len();
    let dim = data.dimension();
    let features_per_split = if params.features_per_split == 0 {
        (dim as f64).sqrt().ceil() as usize
    } else {
        params.features_per_split
    };
    let settings = GrowSettings {
        min_child: params.min_leaf_n,
        min_variance: params.min_variance_v,
        features_per_split,
    };

    let mut trees = Vec::with_capacity(params.tree_count_i);
    // oob_votes[i] = (normal votes, abnormal votes) over trees whose
    // bootstrap sample missed instance i.
    let mut oob_votes = vec![(0u32, 0u32); n];
    for tree_index in 0..params.tree_count_i {
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed.wrapping_add(tree_index as u64));
        let (indices, in_bag) = if params.bootstrap {
            let mut in_bag = vec![false; n];
            let indices: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            (indices, in_bag)
        } else {
            ((0..n).collect(), vec![true; n])
        };
        let root = grow(&data.vectors, &data.labels, &indices, &settings, &mut Some(&mut rng));
        let tree = DecisionTreeModel { root };
        if params.bootstrap {
            for (i, seen) in in_bag.iter().enumerate() {
                if !seen {
                    if tree.score(&data.vectors[i]) > 0.5 {
                        oob_votes[i].1 += 1;
                    } else {
                        oob_votes[i].0 += 1;
                    }
                }
            }
        }
        trees.push(tree);
    }

    let oob_accuracy = if params.bootstrap {
        let mut correct = 0usize;
        let mut scored = 0usize;
        for (i, &(normal, abnormal)) in oob_votes.iter().enumerate() {
            if normal + abnormal == 0 {
                continue;
            }
            scored += 1;
            let vote = if abnormal > normal { ClassLabel::Abnormal } else { ClassLabel::Normal };
            if vote == data.labels[i] {
                correct += 1;
            }
        }
        if scored > 0 {
            Some(correct as f64 / scored as f64)
        } else {
            None
        }
    } else {
        None
    };

    (RandomForestModel { trees, rng_seed: params.rng_seed }, oob_accuracy)
}
