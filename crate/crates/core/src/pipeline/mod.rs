//! The staged concurrent pipeline: source (with optional rate-controlled
//! replay) → single-threaded host-feature stage → binary codec boundary →
//! classifier worker pool → single-writer sink, instrumented with
//! per-session monotonic timestamps and per-stage busy-time accounting.

mod codec;
mod engine;
mod replay;
mod session_io;
mod sink;
#[cfg(test)]
mod tests;
mod truth;

pub use codec::{decode_record, encode_record, record_schema, CodecError, CodecSchema, FieldType};
pub use engine::{run_pipeline, stage_busy_ratio, ClassifierStage, PipelineError, RunSummary};
pub use replay::Pacer;
pub use session_io::{
    read_labeled_sessions, read_sessions_jsonl, write_labeled_sessions, write_sessions_jsonl,
    LabeledSession, SessionIoError,
};
pub use sink::{EmbeddedSink, JsonlSink, NullSink, Sink};
pub use truth::{label_sessions, load_ground_truth, GroundTruthRow, LabelStats, TruthError};

use serde::{Deserialize, Serialize};

use crate::features::FullFeatureRecord;
use crate::model::ClassLabel;

/// Per-session monotonic timestamps (ns since run start).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub session_id: u64,
    /// Pipeline admission: the session-emission analogue.
    pub created_at: u64,
    pub encoded_at: u64,
    pub classified_at: u64,
    /// Stamped at sink write time.
    pub inserted_at: u64,
}

/// One sink line per ingested session: the 21 features, the verdict, and
/// the four timeline timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkRecord {
    #[serde(flatten)]
    pub record: FullFeatureRecord,
    pub label: ClassLabel,
    pub score: f64,
    /// Set when the classifier failed and the fail-open policy labeled the
    /// session NORMAL with score 0.
    #[serde(default)]
    pub error: bool,
    pub created_at: u64,
    pub encoded_at: u64,
    pub classified_at: u64,
    pub inserted_at: u64,
}

impl SinkRecord {
    pub fn timeline(&self) -> TimelineEvent {
        TimelineEvent {
            session_id: self.record.session.session_id,
            created_at: self.created_at,
            encoded_at: self.encoded_at,
            classified_at: self.classified_at,
            inserted_at: self.inserted_at,
        }
    }
}

/// What happens when a classifier worker fails on a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailPolicy {
    /// Write the session with label NORMAL, score 0 and the error flag.
    #[default]
    Open,
    /// Abort the run.
    Closed,
}

fn default_queue_capacity() -> usize {
    10_000
}

fn default_worker_count() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Capacity of each inter-stage queue.
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    #[serde(default = "default_worker_count")]
    pub classifier_worker_count: usize,
    /// Replay pacing in sessions/s; absent means unlimited.
    #[serde(default)]
    pub replay_rate: Option<f64>,
    #[serde(default)]
    pub on_classifier_error: FailPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            queue_capacity: default_queue_capacity(),
            classifier_worker_count: default_worker_count(),
            replay_rate: None,
            on_classifier_error: FailPolicy::Open,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        if self.queue_capacity < 1 {
            return Err(crate::error::ConfigError::new("queue_capacity must be >= 1"));
        }
        if self.classifier_worker_count < 1 {
            return Err(crate::error::ConfigError::new("classifier_worker_count must be >= 1"));
        }
        if let Some(rate) = self.replay_rate {
            if !(rate > 0.0) {
                return Err(crate::error::ConfigError::new("replay_rate must be > 0"));
            }
        }
        Ok(())
    }
}
