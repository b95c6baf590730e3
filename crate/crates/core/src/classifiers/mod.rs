//! The five classifiers: decision tree (C4.5 lineage), random forest,
//! naive Bayes (Gaussian or MDL-discretized), soft-margin SVM trained with
//! SMO, and brute-force kNN. Training is deterministic for a fixed
//! (data order, params, seed); trained models are immutable and shared
//! read-only across prediction threads.

mod bayes;
mod forest;
mod knn;
mod svm;
#[cfg(test)]
mod tests;
mod tree;

pub use bayes::NaiveBayesModel;
pub use forest::RandomForestModel;
pub use knn::KnnModel;
pub use svm::{KernelKind, SvmModel};
pub use tree::DecisionTreeModel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::EncodedVector;
use crate::model::ClassLabel;

const MODEL_FORMAT_VERSION: u32 = 1;

/// Encoded vectors with labels, bound to the normalization spec that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub vectors: Vec<EncodedVector>,
    pub labels: Vec<ClassLabel>,
    pub spec_version: String,
}

impl Dataset {
    pub fn new(
        vectors: Vec<EncodedVector>,
        labels: Vec<ClassLabel>,
        spec_version: impl Into<String>,
    ) -> Result<Self, TrainError> {
        let d = Dataset { vectors, labels, spec_version: spec_version.into() };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.vectors.is_empty() || self.vectors.len() != self.labels.len() {
            return Err(TrainError::InvalidDataset(format!(
                "{} vectors vs {} labels",
                self.vectors.len(),
                self.labels.len()
            )));
        }
        let dim = self.vectors[0].len();
        if self.vectors.iter().any(|v| v.len() != dim) {
            return Err(TrainError::DimensionMismatch);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.first().map(Vec::len).unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("vectors have mixed dimensions")]
    DimensionMismatch,
    #[error("k={k} exceeds training set size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("query dimension {got} does not match model dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("malformed model file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model was trained under spec {model}, pipeline runs spec {pipeline}")]
    SpecMismatch { model: String, pipeline: String },
}

// -- parameters -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DTParams {
    /// Pruning confidence; higher means less pruning.
    pub confidence_c: f64,
    pub min_instances_m: usize,
}

impl Default for DTParams {
    fn default() -> Self {
        DTParams { confidence_c: 0.25, min_instances_m: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RFParams {
    pub tree_count_i: usize,
    pub min_leaf_n: usize,
    /// A numeric feature is a split candidate only when its in-node
    /// variance reaches this floor.
    pub min_variance_v: f64,
    /// Candidate features per split; 0 means ceil(sqrt(dimension)).
    pub features_per_split: usize,
    pub rng_seed: u64,
    /// Bootstrap sampling; disabled only by tests that need the
    /// single-tree degenerate form.
    pub bootstrap: bool,
}

impl Default for RFParams {
    fn default() -> Self {
        RFParams {
            tree_count_i: 100,
            min_leaf_n: 1,
            min_variance_v: 1e-3,
            features_per_split: 0,
            rng_seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NBParams {
    pub supervised_discretization_d: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SVMParams {
    pub kernel_k: KernelKind,
    /// Polynomial degree; used only when kernel is polynomial.
    pub degree_d: u32,
    pub complexity_c: f64,
    pub smo_tolerance: f64,
    pub max_passes: usize,
    pub rng_seed: u64,
}

impl Default for SVMParams {
    fn default() -> Self {
        SVMParams {
            kernel_k: KernelKind::Rbf,
            degree_d: 3,
            complexity_c: 1.0,
            smo_tolerance: 1e-3,
            max_passes: 10_000,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KNNParams {
    pub neighbors_k: usize,
    pub inverse_distance_weighting_i: bool,
}

impl Default for KNNParams {
    fn default() -> Self {
        KNNParams { neighbors_k: 1, inverse_distance_weighting_i: false }
    }
}

// -- trained model --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    DecisionTree(DecisionTreeModel),
    RandomForest(RandomForestModel),
    NaiveBayes(NaiveBayesModel),
    Svm(SvmModel),
    Knn(KnnModel),
}

impl ModelKind {
    pub fn algorithm(&self) -> &'static str {
        match self {
            ModelKind::DecisionTree(_) => "dt",
            ModelKind::RandomForest(_) => "rf",
            ModelKind::NaiveBayes(_) => "nb",
            ModelKind::Svm(_) => "svm",
            ModelKind::Knn(_) => "knn",
        }
    }
}

/// Training metadata embedded in the model file. Wall-clock training time
/// is reported in the run summary instead, so identical runs produce
/// byte-identical model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub algorithm: String,
    pub params: serde_json::Value,
    pub spec_version: String,
    pub input_dimension: usize,
    pub training_rows: usize,
    pub convergence_warning: bool,
    /// Out-of-bag accuracy; random forest with bootstrap only.
    pub oob_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub meta: ModelMeta,
    pub kind: ModelKind,
}

impl TrainedModel {
    fn new(kind: ModelKind, params: serde_json::Value, data: &Dataset) -> Self {
        let meta = ModelMeta {
            format_version: MODEL_FORMAT_VERSION,
            algorithm: kind.algorithm().to_string(),
            params,
            spec_version: data.spec_version.clone(),
            input_dimension: data.dimension(),
            training_rows: data.len(),
            convergence_warning: false,
            oob_accuracy: None,
        };
        TrainedModel { meta, kind }
    }

    /// Classifies a vector; the score is the confidence for ABNORMAL and the
    /// label is ABNORMAL exactly when score > 0.5 (ties go to NORMAL).
    pub fn predict(&self, vector: &[f64]) -> Result<(ClassLabel, f64), PredictError> {
        if vector.len() != self.meta.input_dimension {
            return Err(PredictError::DimensionMismatch {
                got: vector.len(),
                want: self.meta.input_dimension,
            });
        }
        let score = match &self.kind {
            ModelKind::DecisionTree(m) => m.score(vector),
            ModelKind::RandomForest(m) => m.score(vector),
            ModelKind::NaiveBayes(m) => m.score(vector),
            ModelKind::Svm(m) => m.score(vector),
            ModelKind::Knn(m) => m.score(vector),
        };
        Ok((label_from_score(score), score))
    }

    pub fn require_spec(&self, fingerprint: &str) -> Result<(), ModelIoError> {
        if self.meta.spec_version != fingerprint {
            return Err(ModelIoError::SpecMismatch {
                model: self.meta.spec_version.clone(),
                pipeline: fingerprint.to_string(),
            });
        }
        Ok(())
    }
}

/// The single tie rule shared by all five classifiers.
pub fn label_from_score(score: f64) -> ClassLabel {
    if score > 0.5 {
        ClassLabel::Abnormal
    } else {
        ClassLabel::Normal
    }
}

// -- trainers -------------------------------------------------------------

pub fn train_decision_tree(data: &Dataset, params: &DTParams) -> Result<TrainedModel, TrainError> {
    data.validate()?;
    if !(0.0..1.0).contains(&params.confidence_c) || params.confidence_c <= 0.0 {
        return Err(TrainError::InvalidParam(format!("confidence_c={}", params.confidence_c)));
    }
    if params.min_instances_m < 1 {
        return Err(TrainError::InvalidParam("min_instances_m must be >= 1".into()));
    }
    let model = tree::train(data, params);
    Ok(TrainedModel::new(
        ModelKind::DecisionTree(model),
        serde_json::to_value(params).unwrap(),
        data,
    ))
}

pub fn train_random_forest(data: &Dataset, params: &RFParams) -> Result<TrainedModel, TrainError> {
    data.validate()?;
    if params.tree_count_i < 1 || params.min_leaf_n < 1 || params.min_variance_v <= 0.0 {
        return Err(TrainError::InvalidParam("rf params out of range".into()));
    }
    let (model, oob) = forest::train(data, params);
    let mut trained = TrainedModel::new(
        ModelKind::RandomForest(model),
        serde_json::to_value(params).unwrap(),
        data,
    );
    trained.meta.oob_accuracy = oob;
    Ok(trained)
}

pub fn train_naive_bayes(data: &Dataset, params: &NBParams) -> Result<TrainedModel, TrainError> {
    data.validate()?;
    let model = bayes::train(data, params);
    Ok(TrainedModel::new(ModelKind::NaiveBayes(model), serde_json::to_value(params).unwrap(), data))
}

pub fn train_svm(data: &Dataset, params: &SVMParams) -> Result<TrainedModel, TrainError> {
    data.validate()?;
    if params.complexity_c <= 0.0 || params.degree_d < 1 {
        return Err(TrainError::InvalidParam("svm params out of range".into()));
    }
    let (model, converged) = svm::train(data, params);
    let mut trained =
        TrainedModel::new(ModelKind::Svm(model), serde_json::to_value(params).unwrap(), data);
    trained.meta.convergence_warning = !converged;
    Ok(trained)
}

pub fn train_knn(data: &Dataset, params: &KNNParams) -> Result<TrainedModel, TrainError> {
    data.validate()?;
    if params.neighbors_k < 1 {
        return Err(TrainError::InvalidParam("neighbors_k must be >= 1".into()));
    }
    if params.neighbors_k > data.len() {
        return Err(TrainError::KTooLarge { k: params.neighbors_k, n: data.len() });
    }
    let model = knn::KnnModel::from_dataset(data, params);
    Ok(TrainedModel::new(ModelKind::Knn(model), serde_json::to_value(params).unwrap(), data))
}

// -- persistence ----------------------------------------------------------

/// Serializes a model to its versioned JSON container.
pub fn save_model(model: &TrainedModel) -> Vec<u8> {
    serde_json::to_vec(model).expect("model serializes")
}

pub fn load_model(bytes: &[u8]) -> Result<TrainedModel, ModelIoError> {
    let model: TrainedModel = serde_json::from_slice(bytes)?;
    if model.meta.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(model.meta.format_version));
    }
    Ok(model)
}
