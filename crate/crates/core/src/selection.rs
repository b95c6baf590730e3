//! Class balancing, hyperparameter grid expansion and search, and the
//! precision/recall/F1 evaluation metrics (ABNORMAL is the positive class).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    train_decision_tree, train_knn, train_naive_bayes, train_random_forest, train_svm, DTParams,
    Dataset, KNNParams, KernelKind, NBParams, RFParams, SVMParams, TrainError, TrainedModel,
};
use crate::model::ClassLabel;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("dataset contains a single class; balancing needs both")]
    SingleClass,
    #[error("prediction/truth length mismatch: {predictions} vs {truth}")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("empty evaluation input")]
    EmptyEvaluation,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("training failed at grid point {point_index} ({params:?}): {source}")]
    Train {
        point_index: usize,
        params: Vec<(String, f64)>,
        source: TrainError,
    },
    #[error("train and validation sets disagree on spec version: {train} vs {validation}")]
    SpecMismatch { train: String, validation: String },
    #[error("unknown algorithm id {0:?}")]
    UnknownAlgorithm(String),
}

// -- balancing -------------------------------------------------------------

/// Randomly subsamples the majority class (without replacement) down to the
/// minority count, then shuffles the combined output. Deterministic in the
/// seed.
pub fn downsample(data: &Dataset, seed: u64) -> Result<Dataset, SelectionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut normal, mut abnormal): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| !data.labels[i].is_abnormal());
    if normal.is_empty() || abnormal.is_empty() {
        return Err(SelectionError::SingleClass);
    }
    let keep = normal.len().min(abnormal.len());
    let (majority, minority) =
        if normal.len() > abnormal.len() { (&mut normal, &abnormal) } else { (&mut abnormal, &normal) };
    majority.shuffle(&mut rng);
    majority.truncate(keep);

    let mut indices: Vec<usize> = majority.iter().chain(minority.iter()).copied().collect();
    indices.shuffle(&mut rng);

    Dataset::new(
        indices.iter().map(|&i| data.vectors[i].clone()).collect(),
        indices.iter().map(|&i| data.labels[i]).collect(),
        data.spec_version.clone(),
    )
    .map_err(|e| SelectionError::InvalidGrid(e.to_string()))
}

/// Seeded stratified split; the first set receives `fraction` of each class.
pub fn stratified_split(data: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut normal, mut abnormal): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| !data.labels[i].is_abnormal());
    normal.shuffle(&mut rng);
    abnormal.shuffle(&mut rng);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in [normal, abnormal] {
        let cut = (class.len() as f64 * fraction).round() as usize;
        first.extend_from_slice(&class[..cut]);
        second.extend_from_slice(&class[cut..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    let take = |idx: &[usize]| {
        Dataset {
            vectors: idx.iter().map(|&i| data.vectors[i].clone()).collect(),
            labels: idx.iter().map(|&i| data.labels[i]).collect(),
            spec_version: data.spec_version.clone(),
        }
    };
    (take(&first), take(&second))
}

// -- grids -----------------------------------------------------------------

/// One searched parameter: `count` evenly spaced values from `first` to
/// `last` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParam {
    pub name: String,
    pub first: f64,
    pub last: f64,
    pub count: usize,
    /// Round each value to the nearest integer and drop duplicates.
    #[serde(default)]
    pub integer: bool,
}

impl GridParam {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count);
        for i in 0..self.count {
            let v = if self.count == 1 {
                self.first
            } else {
                self.first + (self.last - self.first) * i as f64 / (self.count - 1) as f64
            };
            let v = if self.integer { v.round() } else { v };
            if self.integer && out.last() == Some(&v) {
                continue;
            }
            out.push(v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub params: Vec<GridParam>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), SelectionError> {
        for p in &self.params {
            if p.count < 1 {
                return Err(SelectionError::InvalidGrid(format!("{}: count < 1", p.name)));
            }
            if p.first > p.last {
                return Err(SelectionError::InvalidGrid(format!("{}: first > last", p.name)));
            }
        }
        Ok(())
    }
}

/// Cartesian product in row-major order (last parameter varies fastest).
pub fn make_grid(spec: &GridSpec) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = spec.params.iter().map(GridParam::values).collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut row = prefix.clone();
                row.push(v);
                next.push(row);
            }
        }
        out = next;
    }
    out
}

// -- evaluation ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confusion counts and derived metrics with ABNORMAL positive. The
/// zero-denominator cases (no predicted positives, no actual positives,
/// P + R = 0) all evaluate to 0.
pub fn evaluate(
    predictions: &[ClassLabel],
    truth: &[ClassLabel],
) -> Result<EvalMetrics, SelectionError> {
    if predictions.len() != truth.len() {
        return Err(SelectionError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(SelectionError::EmptyEvaluation);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in predictions.iter().zip(truth) {
        match (p.is_abnormal(), t.is_abnormal()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 =
        if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(EvalMetrics { tp, fp, fn_, tn, precision, recall, f1 })
}

// -- grid search -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dt,
    Rf,
    Nb,
    Svm,
    Knn,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Algorithm, SelectionError> {
        match s {
            "dt" => Ok(Algorithm::Dt),
            "rf" => Ok(Algorithm::Rf),
            "nb" => Ok(Algorithm::Nb),
            "svm" => Ok(Algorithm::Svm),
            "knn" => Ok(Algorithm::Knn),
            other => Err(SelectionError::UnknownAlgorithm(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dt => "dt",
            Algorithm::Rf => "rf",
            Algorithm::Nb => "nb",
            Algorithm::Svm => "svm",
            Algorithm::Knn => "knn",
        }
    }

    /// The searched parameters of each algorithm, in grid-table order.
    /// Unlisted parameters keep their defaults (seeded from `seed`).
    pub fn default_grid(&self) -> GridSpec {
        let p = |name: &str, first: f64, last: f64, count: usize, integer: bool| GridParam {
            name: name.to_string(),
            first,
            last,
            count,
            integer,
        };
        GridSpec {
            params: match self {
                Algorithm::Dt => vec![
                    p("confidence_c", 0.01, 0.99, 99, false),
                    p("min_instances_m", 1.0, 100.0, 10, true),
                ],
                Algorithm::Rf => vec![
                    p("tree_count_i", 50.0, 500.0, 10, true),
                    p("min_leaf_n", 2.0, 5.0, 4, true),
                    p("min_variance_v", 1.0e-5, 0.01, 5, false),
                ],
                Algorithm::Nb => vec![p("supervised_discretization_d", 0.0, 1.0, 2, true)],
                Algorithm::Svm => vec![
                    p("kernel_k", 0.0, 3.0, 4, true),
                    p("degree_d", 1.0, 5.0, 5, true),
                    p("complexity_c", 0.1, 10.0, 100, false),
                ],
                Algorithm::Knn => vec![
                    p("neighbors_k", 2.0, 100.0, 99, true),
                    p("inverse_distance_weighting_i", 0.0, 1.0, 2, true),
                ],
            },
        }
    }

    /// Trains with named parameter overrides applied over the defaults.
    pub fn train(
        &self,
        data: &Dataset,
        params: &[(String, f64)],
        seed: u64,
    ) -> Result<TrainedModel, TrainError> {
        let get = |name: &str| params.iter().find(|(n, _)| n == name).map(|(_, v)| *v);
        match self {
            Algorithm::Dt => {
                let mut p = DTParams::default();
                if let Some(v) = get("confidence_c") {
                    p.confidence_c = v;
                }
                if let Some(v) = get("min_instances_m") {
                    p.min_instances_m = v as usize;
                }
                train_decision_tree(data, &p)
            }
            Algorithm::Rf => {
                let mut p = RFParams { rng_seed: seed, ..RFParams::default() };
                if let Some(v) = get("tree_count_i") {
                    p.tree_count_i = v as usize;
                }
                if let Some(v) = get("min_leaf_n") {
                    p.min_leaf_n = v as usize;
                }
                if let Some(v) = get("min_variance_v") {
                    p.min_variance_v = v;
                }
                train_random_forest(data, &p)
            }
            Algorithm::Nb => {
                let p = NBParams {
                    supervised_discretization_d: get("supervised_discretization_d")
                        .map_or(false, |v| v != 0.0),
                };
                train_naive_bayes(data, &p)
            }
            Algorithm::Svm => {
                let mut p = SVMParams { rng_seed: seed, ..SVMParams::default() };
                if let Some(v) = get("kernel_k") {
                    p.kernel_k = KernelKind::from_index(v as u32).ok_or_else(|| {
                        TrainError::InvalidParam(format!("kernel_k={v}"))
                    })?;
                }
                if let Some(v) = get("degree_d") {
                    p.degree_d = v as u32;
                }
                if let Some(v) = get("complexity_c") {
                    p.complexity_c = v;
                }
                train_svm(data, &p)
            }
            Algorithm::Knn => {
                let p = KNNParams {
                    neighbors_k: get("neighbors_k").map_or(1.0, |v| v) as usize,
                    inverse_distance_weighting_i: get("inverse_distance_weighting_i")
                        .map_or(false, |v| v != 0.0),
                };
                train_knn(data, &p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: Vec<(String, f64)>,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub schema_version: u32,
    pub algorithm: String,
    pub best_params: Vec<(String, f64)>,
    pub best_f1: f64,
    pub table: Vec<GridRow>,
    /// How the validation set was produced, recorded for reproducibility.
    pub validation_protocol: String,
    pub seed: u64,
}

/// Trains one model per grid point on `train`, scores F1 on `validation`,
/// and returns the argmax. Ties break toward the earliest grid point, so a
/// parallel evaluation must still reduce in grid order.
pub fn grid_search(
    algorithm: Algorithm,
    grid: &GridSpec,
    train: &Dataset,
    validation: &Dataset,
    seed: u64,
) -> Result<SearchResult, SelectionError> {
    grid.validate()?;
    if train.spec_version != validation.spec_version {
        return Err(SelectionError::SpecMismatch {
            train: train.spec_version.clone(),
            validation: validation.spec_version.clone(),
        });
    }
    let names: Vec<&str> = grid.params.iter().map(|p| p.name.as_str()).collect();
    let mut table = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (point_index, point) in make_grid(grid).into_iter().enumerate() {
        let params: Vec<(String, f64)> =
            names.iter().zip(&point).map(|(n, &v)| (n.to_string(), v)).collect();
        let model = algorithm.train(train, &params, seed).map_err(|source| {
            SelectionError::Train { point_index, params: params.clone(), source }
        })?;
        let predictions: Vec<ClassLabel> = validation
            .vectors
            .iter()
            .map(|v| model.predict(v).expect("dimension validated").0)
            .collect();
        let f1 = evaluate(&predictions, &validation.labels)?.f1;
        if best.map_or(true, |(_, bf)| f1 > bf) {
            best = Some((point_index, f1));
        }
        table.push(GridRow { params, f1 });
    }
    let (best_index, best_f1) = best.expect("grid has at least one point");
    Ok(SearchResult {
        schema_version: 1,
        algorithm: algorithm.name().to_string(),
        best_params: table[best_index].params.clone(),
        best_f1,
        table,
        validation_protocol: "seeded 70/30 stratified split of the balanced training set"
            .to_string(),
        seed,
    })
}

// -- persistence -----------------------------------------------------------

/// One row per grid point: the parameter columns in grid order, then f1.
pub fn search_result_csv(result: &SearchResult) -> String {
    let mut out = String::new();
    if let Some(first) = result.table.first() {
        for (name, _) in &first.params {
            out.push_str(name);
            out.push(',');
        }
    }
    out.push_str("f1\n");
    for row in &result.table {
        for (_, v) in &row.params {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", row.f1));
    }
    out
}

pub fn search_result_json(result: &SearchResult) -> Vec<u8> {
    serde_json::to_vec_pretty(result).expect("search result serializes")
}
