use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::FullFeatureRecord;

/// Vocabulary bucket that absorbs categorical values unseen at fit time.
pub const OTHER_BUCKET: &str = "__other__";

/// Classifier input: fixed-length vector with every component in [0, 1].
pub type EncodedVector = Vec<f64>;

const SCHEMA_VERSION: u32 = 1;

/// Numeric feature names in encoding order. Timestamp and the two IP
/// addresses are removed before encoding and never appear here.
pub const NUMERIC_FEATURES: [&str; 14] = [
    "duration_s",
    "src_port",
    "dst_port",
    "src_packets",
    "src_bytes",
    "src_ip_bytes",
    "dst_packets",
    "dst_bytes",
    "dst_ip_bytes",
    "dst_host_count",
    "dst_host_same_src_port_count",
    "dst_host_serror_count",
    "dst_host_srv_count",
    "dst_host_srv_serror_count",
];

pub const CATEGORICAL_FEATURES: [&str; 4] = ["protocol", "service", "conn_state", "direction"];

fn numeric_values(r: &FullFeatureRecord) -> [f64; 14] {
    let s = &r.session;
    [
        s.duration_s,
        s.five_tuple.src_port as f64,
        s.five_tuple.dst_port as f64,
        s.src_packets as f64,
        s.src_bytes as f64,
        s.src_ip_bytes as f64,
        s.dst_packets as f64,
        s.dst_bytes as f64,
        s.dst_ip_bytes as f64,
        r.host.dst_host_count as f64,
        r.host.dst_host_same_src_port_count as f64,
        r.host.dst_host_serror_count as f64,
        r.host.dst_host_srv_count as f64,
        r.host.dst_host_srv_serror_count as f64,
    ]
}

fn categorical_values(r: &FullFeatureRecord) -> [String; 4] {
    let s = &r.session;
    [
        s.five_tuple.protocol.as_str().to_string(),
        s.service.name().to_string(),
        s.conn_state.as_str().to_string(),
        s.direction.as_str().to_string(),
    ]
}

/// Fitted scaling and encoding metadata. Immutable after fitting; persists
/// as versioned JSON so train-time and serve-time encodings are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    schema_version: u32,
    /// Per-numeric-feature maximum, in `NUMERIC_FEATURES` order.
    numeric_max: Vec<f64>,
    /// Per-categorical vocabularies (sorted distinct training values plus
    /// the OTHER bucket), in `CATEGORICAL_FEATURES` order.
    vocabularies: Vec<Vec<String>>,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("cannot fit a normalization spec on an empty training set")]
    EmptyTrainingSet,
}

#[derive(Debug, Error)]
pub enum SpecLoadError {
    #[error("malformed normalization spec: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported normalization spec schema version {0}")]
    UnsupportedVersion(u32),
}

impl NormalizationSpec {
    /// Encoded vector length: numeric features plus one-hot widths.
    pub fn dimension(&self) -> usize {
        NUMERIC_FEATURES.len() + self.vocabularies.iter().map(Vec::len).sum::<usize>()
    }

    /// Stable identity of this spec; models record it and the pipeline
    /// refuses to mix encodings from different specs.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SpecLoadError> {
        let spec: NormalizationSpec = serde_json::from_str(s)?;
        if spec.schema_version != SCHEMA_VERSION {
            return Err(SpecLoadError::UnsupportedVersion(spec.schema_version));
        }
        Ok(spec)
    }

    pub fn numeric_max(&self, name: &str) -> Option<f64> {
        NUMERIC_FEATURES.iter().position(|n| *n == name).map(|i| self.numeric_max[i])
    }

    pub fn vocabulary(&self, name: &str) -> Option<&[String]> {
        CATEGORICAL_FEATURES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.vocabularies[i].as_slice())
    }
}

/// Fits maxima and vocabularies from training data. Ports and the five
/// host features use their specification maxima (65535 and 100); the other
/// numeric features use the observed training maximum, with 0 replaced by 1.
pub fn fit_normalization(training: &[FullFeatureRecord]) -> Result<NormalizationSpec, FitError> {
    if training.is_empty() {
        return Err(FitError::EmptyTrainingSet);
    }
    let mut numeric_max = vec![0.0f64; NUMERIC_FEATURES.len()];
    for r in training {
        for (m, v) in numeric_max.iter_mut().zip(numeric_values(r)) {
            *m = m.max(v);
        }
    }
    for (i, name) in NUMERIC_FEATURES.iter().enumerate() {
        numeric_max[i] = match *name {
            "src_port" | "dst_port" => 65535.0,
            n if n.starts_with("dst_host_") => 100.0,
            _ => {
                if numeric_max[i] <= 0.0 {
                    1.0
                } else {
                    numeric_max[i]
                }
            }
        };
    }
    let mut vocabularies = Vec::with_capacity(CATEGORICAL_FEATURES.len());
    for i in 0..CATEGORICAL_FEATURES.len() {
        let mut values: Vec<String> =
            training.iter().map(|r| categorical_values(r)[i].clone()).collect();
        values.sort();
        values.dedup();
        values.push(OTHER_BUCKET.to_string());
        vocabularies.push(values);
    }
    Ok(NormalizationSpec { schema_version: SCHEMA_VERSION, numeric_max, vocabularies })
}

/// Drops timestamp and addresses, scales each numeric feature by its
/// maximum (clamped to [0, 1]) and one-hot encodes categoricals, mapping
/// unseen values to the OTHER bucket.
pub fn strip_and_encode(record: &FullFeatureRecord, spec: &NormalizationSpec) -> EncodedVector {
    let mut out = Vec::with_capacity(spec.dimension());
    for (v, m) in numeric_values(record).into_iter().zip(&spec.numeric_max) {
        let scaled = v / m;
        out.push(if scaled.is_nan() { 0.0 } else { scaled.clamp(0.0, 1.0) });
    }
    for (value, vocab) in categorical_values(record).into_iter().zip(&spec.vocabularies) {
        let hit = vocab
            .iter()
            .position(|c| *c == value)
            .unwrap_or(vocab.len() - 1); // OTHER bucket is always last
        for i in 0..vocab.len() {
            out.push(if i == hit { 1.0 } else { 0.0 });
        }
    }
    out
}
