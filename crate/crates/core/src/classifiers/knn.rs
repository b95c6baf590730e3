//! Brute-force k-nearest-neighbor classifier. The model stores the
//! training set verbatim; queries sort by (distance, insertion index) so
//! equidistant neighbors resolve deterministically.

use serde::{Deserialize, Serialize};

use crate::model::ClassLabel;

use super::{Dataset, KNNParams};

/// Guards the inverse-distance weight against exact duplicates.
const DISTANCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<ClassLabel>,
    pub neighbors_k: usize,
    pub inverse_distance_weighting: bool,
}

impl KnnModel {
    pub fn from_dataset(data: &Dataset, params: &KNNParams) -> KnnModel {
        KnnModel {
            vectors: data.vectors.clone(),
            labels: data.labels.clone(),
            neighbors_k: params.neighbors_k,
            inverse_distance_weighting: params.inverse_distance_weighting_i,
        }
    }

    /// Weighted fraction of the k nearest neighbors labeled ABNORMAL.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut dists: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let sq: f64 = v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (sq.sqrt(), i)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut abnormal = 0.0;
        let mut total = 0.0;
        for &(d, i) in dists.iter().take(self.neighbors_k) {
            let w = if self.inverse_distance_weighting { 1.0 / (d + DISTANCE_EPSILON) } else { 1.0 };
            total += w;
            if self.labels[i].is_abnormal() {
                abnormal += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            abnormal / total
        }
    }
}
