//! Host-based feature extraction over the last-100-sessions window and the
//! normalization/encoding step that produces classifier-ready vectors.

mod normalize;
mod window;

pub use normalize::{
    fit_normalization, strip_and_encode, EncodedVector, FitError, NormalizationSpec,
    SpecLoadError, CATEGORICAL_FEATURES, NUMERIC_FEATURES, OTHER_BUCKET,
};
pub use window::{HostWindow, WINDOW_CAPACITY};

use serde::{Deserialize, Serialize};

use crate::model::SessionRecord;

/// The 5 window-derived features of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HostFeatures {
    /// Prior window sessions to this destination from the same source address.
    pub dst_host_count: u32,
    /// Subset of `dst_host_count` with the same source port.
    pub dst_host_same_src_port_count: u32,
    /// Subset of `dst_host_count` that experienced SYN errors.
    pub dst_host_serror_count: u32,
    /// Window sessions to this destination with the same service type.
    pub dst_host_srv_count: u32,
    /// Subset of `dst_host_srv_count` that experienced SYN errors.
    pub dst_host_srv_serror_count: u32,
}

/// The 21-feature union fed to the codec boundary and classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullFeatureRecord {
    #[serde(flatten)]
    pub session: SessionRecord,
    #[serde(flatten)]
    pub host: HostFeatures,
}
