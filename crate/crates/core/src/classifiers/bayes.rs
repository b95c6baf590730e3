//! Naive Bayes with either per-feature Gaussians or Fayyad–Irani
//! MDL-based supervised discretization with Laplace-smoothed bin
//! likelihoods.

use serde::{Deserialize, Serialize};

use crate::model::ClassLabel;

use super::{Dataset, NBParams};

const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureModel {
    Gaussian {
        /// (mean, variance) per class: [normal, abnormal].
        per_class: [(f64, f64); 2],
    },
    Discretized {
        /// Ascending cut points; value v falls in the first bin whose cut
        /// exceeds it (bin count = cuts.len() + 1).
        cuts: Vec<f64>,
        /// Per-class log-likelihood per bin: [normal, abnormal].
        log_likelihood: [Vec<f64>; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub log_prior: [f64; 2],
    pub features: Vec<FeatureModel>,
}

fn class_index(label: ClassLabel) -> usize {
    if label.is_abnormal() {
        1
    } else {
        0
    }
}

impl NaiveBayesModel {
    pub fn log_posteriors(&self, x: &[f64]) -> [f64; 2] {
        let mut log_post = self.log_prior;
        for (fm, &v) in self.features.iter().zip(x) {
            match fm {
                FeatureModel::Gaussian { per_class } => {
                    for (c, &(mean, var)) in per_class.iter().enumerate() {
                        let d = v - mean;
                        log_post[c] +=
                            -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
                    }
                }
                FeatureModel::Discretized { cuts, log_likelihood } => {
                    let bin = cuts.partition_point(|c| v > *c);
                    for c in 0..2 {
                        log_post[c] += log_likelihood[c][bin];
                    }
                }
            }
        }
        log_post
    }

    /// Posterior probability of ABNORMAL.
    pub fn score(&self, x: &[f64]) -> f64 {
        let [ln, la] = self.log_posteriors(x);
        let m = ln.max(la);
        let (en, ea) = ((ln - m).exp(), (la - m).exp());
        ea / (en + ea)
    }
}

pub(crate) fn train(data: &Dataset, params: &NBParams) -> NaiveBayesModel {
    let n = data.len() as f64;
    let abnormal = data.labels.iter().filter(|l| l.is_abnormal()).count();
    let counts = [data.len() - abnormal, abnormal];
    // Priors are class frequencies; an absent class gets -inf and can
    // never win the argmax.
    let log_prior = [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()];

    let dim = data.dimension();
    let features = (0..dim)
        .map(|f| {
            if params.supervised_discretization_d {
                fit_discretized(data, f, counts)
            } else {
                fit_gaussian(data, f)
            }
        })
        .collect();

    NaiveBayesModel { log_prior, features }
}

fn fit_gaussian(data: &Dataset, feature: usize) -> FeatureModel {
    let mut per_class = [(0.0f64, 0.0f64); 2];
    let mut n = [0.0f64; 2];
    for (v, l) in data.vectors.iter().zip(&data.labels) {
        let c = class_index(*l);
        per_class[c].0 += v[feature];
        n[c] += 1.0;
    }
    for c in 0..2 {
        if n[c] > 0.0 {
            per_class[c].0 /= n[c];
        }
    }
    for (v, l) in data.vectors.iter().zip(&data.labels) {
        let c = class_index(*l);
        let d = v[feature] - per_class[c].0;
        per_class[c].1 += d * d;
    }
    for c in 0..2 {
        // Population variance with a floor; an absent class degenerates to
        // a standard normal at 0 and is dominated by its prior.
        per_class[c].1 = if n[c] > 0.0 { (per_class[c].1 / n[c]).max(VARIANCE_FLOOR) } else { 1.0 };
    }
    FeatureModel::Gaussian { per_class }
}

fn entropy2(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

fn classes_present(counts: [usize; 2]) -> f64 {
    counts.iter().filter(|&&c| c > 0).count() as f64
}

/// Recursive entropy-minimizing binary cuts with the MDL stopping rule.
fn mdl_cuts(points: &[(f64, bool)], out: &mut Vec<f64>) {
    let n = points.len();
    if n < 2 {
        return;
    }
    let total = {
        let abn = points.iter().filter(|(_, a)| *a).count();
        [n - abn, abn]
    };
    if total[0] == 0 || total[1] == 0 {
        return;
    }
    let parent_entropy = entropy2(total);

    let mut best: Option<(usize, f64)> = None; // (split position, weighted entropy)
    let mut left = [0usize; 2];
    for i in 1..n {
        let c = if points[i - 1].1 { 1 } else { 0 };
        left[c] += 1;
        if points[i].0 == points[i - 1].0 {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let w = (i as f64 / n as f64) * entropy2(left)
            + ((n - i) as f64 / n as f64) * entropy2(right);
        if best.map_or(true, |(_, bw)| w < bw - 1e-15) {
            best = Some((i, w));
        }
    }
    let Some((pos, weighted)) = best else {
        return;
    };

    let gain = parent_entropy - weighted;
    let left_counts = {
        let abn = points[..pos].iter().filter(|(_, a)| *a).count();
        [pos - abn, abn]
    };
    let right_counts = [total[0] - left_counts[0], total[1] - left_counts[1]];
    let k = classes_present(total);
    let k1 = classes_present(left_counts);
    let k2 = classes_present(right_counts);
    let delta = (3f64.powf(k) - 2.0).log2()
        - (k * parent_entropy - k1 * entropy2(left_counts) - k2 * entropy2(right_counts));
    let threshold = ((n as f64 - 1.0).log2() + delta) / n as f64;
    if gain <= threshold {
        return;
    }

    mdl_cuts(&points[..pos], out);
    out.push((points[pos - 1].0 + points[pos].0) / 2.0);
    mdl_cuts(&points[pos..], out);
}

fn fit_discretized(data: &Dataset, feature: usize, class_counts: [usize; 2]) -> FeatureModel {
    let mut points: Vec<(f64, bool)> =
        data.vectors.iter().zip(&data.labels).map(|(v, l)| (v[feature], l.is_abnormal())).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cuts = Vec::new();
    mdl_cuts(&points, &mut cuts);

    let bins = cuts.len() + 1;
    let mut bin_counts = [vec![0usize; bins], vec![0usize; bins]];
    for &(v, abn) in &points {
        let bin = cuts.partition_point(|c| v > *c);
        bin_counts[if abn { 1 } else { 0 }][bin] += 1;
    }
    let log_likelihood = [0, 1].map(|c| {
        bin_counts[c]
            .iter()
            .map(|&b| ((b as f64 + 1.0) / (class_counts[c] as f64 + bins as f64)).ln())
            .collect()
    });
    FeatureModel::Discretized { cuts, log_likelihood }
}
