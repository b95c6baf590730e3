//! The staged engine. Stages run on their own threads connected by bounded
//! blocking channels, so a full queue applies backpressure instead of
//! dropping records. Only the single-threaded feature stage touches window
//! state; classifier workers share one immutable model.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crossbeam_channel::bounded;
use thiserror::Error;

use crate::classifiers::{ModelIoError, PredictError, TrainedModel};
use crate::error::ConfigError;
use crate::features::{strip_and_encode, FullFeatureRecord, HostWindow, NormalizationSpec};
use crate::model::{ClassLabel, SessionRecord};

use super::codec::{decode_record, encode_record, record_schema};
use super::replay::Pacer;
use super::sink::Sink;
use super::{FailPolicy, PipelineConfig, SinkRecord, TimelineEvent};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("model/spec mismatch: {0}")]
    SpecMismatch(#[from] ModelIoError),
    #[error("classifier failed on session {session_id} under the fail-closed policy: {source}")]
    ClassifierFailed { session_id: u64, source: PredictError },
}

/// The classification step shared by the worker pool.
#[derive(Clone)]
pub enum ClassifierStage {
    /// Labels everything NORMAL with score 0; measures pure plumbing cost.
    Null,
    Model { model: Arc<TrainedModel>, spec: Arc<NormalizationSpec> },
}

impl ClassifierStage {
    fn predict(&self, record: &FullFeatureRecord) -> Result<(ClassLabel, f64), PredictError> {
        match self {
            ClassifierStage::Null => Ok((ClassLabel::Normal, 0.0)),
            ClassifierStage::Model { model, spec } => {
                model.predict(&strip_and_encode(record, spec))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ingested: usize,
    pub inserted: usize,
    /// Sessions the fail-open policy wrote with the error flag.
    pub classifier_errors: usize,
    /// Session ids lost to codec decode failures (none in normal operation).
    pub decode_failures: Vec<u64>,
    /// Session ids whose sink write failed after three retries.
    pub sink_failures: Vec<u64>,
    pub timeline: Vec<TimelineEvent>,
    pub wall_ns: u64,
    /// Busy nanoseconds per stage; workers listed individually.
    pub stage_busy_ns: BTreeMap<String, u64>,
    pub worker_count: usize,
}

const SINK_RETRIES: usize = 3;

/// Per-stage busy-time share of the run's wall time, plus the summed
/// classifier share (which can exceed 1 with multiple workers).
pub fn stage_busy_ratio(summary: &RunSummary) -> BTreeMap<String, f64> {
    let wall = summary.wall_ns.max(1) as f64;
    let mut out: BTreeMap<String, f64> =
        summary.stage_busy_ns.iter().map(|(k, &v)| (k.clone(), v as f64 / wall)).collect();
    let classifier_total: f64 = summary
        .stage_busy_ns
        .iter()
        .filter(|(k, _)| k.starts_with("classifier_worker_"))
        .map(|(_, &v)| v as f64 / wall)
        .sum();
    out.insert("classifier_total".to_string(), classifier_total);
    out
}

/// Runs every source session through admission → host features → codec
/// boundary → classification → sink and returns the reconciled summary:
/// ingested = inserted + decode failures + sink failures.
pub fn run_pipeline(
    config: &PipelineConfig,
    source: impl Iterator<Item = SessionRecord> + Send,
    classifier: &ClassifierStage,
    sink: &mut dyn Sink,
) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    if let ClassifierStage::Model { model, spec } = classifier {
        model.require_spec(&spec.fingerprint())?;
    }

    let start = Instant::now();
    let now_ns = move || start.elapsed().as_nanos() as u64;
    let schema = record_schema();
    let cancel = AtomicBool::new(false);
    let fatal: Mutex<Option<PipelineError>> = Mutex::new(None);

    // admission → feature stage
    let (tx_session, rx_session) = bounded::<(SessionRecord, u64)>(config.queue_capacity);
    // feature stage → workers: (encoded bytes, session_id, created, encoded)
    let (tx_bytes, rx_bytes) = bounded::<(Vec<u8>, u64, u64, u64)>(config.queue_capacity);
    // workers → sink
    let (tx_sink, rx_sink) = bounded::<SinkRecord>(config.queue_capacity);

    let decode_failures: Mutex<Vec<u64>> = Mutex::new(Vec::new());
    let classifier_errors = std::sync::atomic::AtomicUsize::new(0);

    let mut stage_busy_ns: BTreeMap<String, u64> = BTreeMap::new();
    let mut ingested = 0usize;
    let mut sink_out = (0usize, Vec::new(), Vec::new(), 0u64); // inserted, failures, timeline, busy

    std::thread::scope(|scope| {
        // -- source ---------------------------------------------------------
        let source_handle = scope.spawn(|| {
            let mut pacer = config.replay_rate.map(Pacer::new);
            let mut count = 0usize;
            let mut busy = 0u64;
            for session in source {
                if cancel.load(Ordering::Relaxed) {
                    break;
                }
                if let Some(p) = pacer.as_mut() {
                    p.wait();
                }
                let t = Instant::now();
                let created = now_ns();
                let admitted = tx_session.send((session, created));
                busy += t.elapsed().as_nanos() as u64;
                if admitted.is_err() {
                    break;
                }
                count += 1;
            }
            drop(tx_session);
            (count, busy)
        });

        // -- host-feature stage (exactly one consumer of window state) ------
        let feature_handle = scope.spawn(|| {
            let mut window = HostWindow::new();
            let mut busy = 0u64;
            for (session, created) in rx_session.iter() {
                if cancel.load(Ordering::Relaxed) {
                    break;
                }
                let t = Instant::now();
                let host = window.update_and_extract(&session);
                let session_id = session.session_id;
                let record = FullFeatureRecord { session, host };
                let bytes = encode_record(&record, schema);
                let encoded = now_ns();
                busy += t.elapsed().as_nanos() as u64;
                if tx_bytes.send((bytes, session_id, created, encoded)).is_err() {
                    break;
                }
            }
            drop(tx_bytes);
            busy
        });

        // -- classifier workers ---------------------------------------------
        let worker_handles: Vec<_> = (0..config.classifier_worker_count)
            .map(|_| {
                let rx = rx_bytes.clone();
                let tx = tx_sink.clone();
                let classifier_errors = &classifier_errors;
                let decode_failures = &decode_failures;
                let fatal = &fatal;
                let cancel = &cancel;
                let now_ns = &now_ns;
                scope.spawn(move || {
                    let mut busy = 0u64;
                    for (bytes, session_id, created, encoded) in rx.iter() {
                        if cancel.load(Ordering::Relaxed) {
                            break;
                        }
                        let t = Instant::now();
                        let record = match decode_record(&bytes, schema) {
                            Ok(r) => r,
                            Err(_) => {
                                decode_failures.lock().unwrap().push(session_id);
                                busy += t.elapsed().as_nanos() as u64;
                                continue;
                            }
                        };
                        let (label, score, error) = match classifier.predict(&record) {
                            Ok((label, score)) => (label, score, false),
                            Err(source) => {
                                classifier_errors.fetch_add(1, Ordering::Relaxed);
                                if config.on_classifier_error == FailPolicy::Closed {
                                    *fatal.lock().unwrap() = Some(
                                        PipelineError::ClassifierFailed { session_id, source },
                                    );
                                    cancel.store(true, Ordering::Relaxed);
                                    break;
                                }
                                (ClassLabel::Normal, 0.0, true)
                            }
                        };
                        let classified = now_ns();
                        busy += t.elapsed().as_nanos() as u64;
                        let out = SinkRecord {
                            record,
                            label,
                            score,
                            error,
                            created_at: created,
                            encoded_at: encoded,
                            classified_at: classified,
                            inserted_at: 0,
                        };
                        if tx.send(out).is_err() {
                            break;
                        }
                    }
                    busy
                })
            })
            .collect();
        drop(tx_sink); // sink ends once every worker clone is gone
        drop(rx_bytes);

        // -- sink (single writer) -------------------------------------------
        let sink_handle = scope.spawn(|| {
            let mut inserted = 0usize;
            let mut failures = Vec::new();
            let mut timeline = Vec::new();
            let mut busy = 0u64;
            for mut record in rx_sink.iter() {
                let t = Instant::now();
                // The insertion stamp travels inside the written line, so it
                // is taken at write time rather than after the write returns.
                record.inserted_at = now_ns();
                let mut attempts = 0;
                let ok = loop {
                    match sink.write(&record) {
                        Ok(()) => break true,
                        Err(_) if attempts + 1 < SINK_RETRIES => attempts += 1,
                        Err(_) => break false,
                    }
                };
                if ok {
                    inserted += 1;
                    timeline.push(record.timeline());
                } else {
                    failures.push(record.record.session.session_id);
                }
                busy += t.elapsed().as_nanos() as u64;
            }
            let _ = sink.flush();
            (inserted, failures, timeline, busy)
        });

        let (count, source_busy) = source_handle.join().expect("source stage");
        ingested = count;
        stage_busy_ns.insert("source".to_string(), source_busy);
        stage_busy_ns
            .insert("feature".to_string(), feature_handle.join().expect("feature stage"));
        for (i, handle) in worker_handles.into_iter().enumerate() {
            stage_busy_ns
                .insert(format!("classifier_worker_{i}"), handle.join().expect("worker"));
        }
        sink_out = sink_handle.join().expect("sink stage");
    });

    if let Some(err) = fatal.into_inner().unwrap() {
        return Err(err);
    }

    let (inserted, sink_failures, timeline, sink_busy) = sink_out;
    stage_busy_ns.insert("sink".to_string(), sink_busy);
    Ok(RunSummary {
        ingested,
        inserted,
        classifier_errors: classifier_errors.load(Ordering::Relaxed),
        decode_failures: decode_failures.into_inner().unwrap(),
        sink_failures,
        timeline,
        wall_ns: now_ns(),
        stage_busy_ns,
        worker_count: config.classifier_worker_count,
    })
}
