use std::io;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifiers::{train_decision_tree, DTParams, Dataset};
use crate::features::{fit_normalization, strip_and_encode, FullFeatureRecord, HostFeatures, HostWindow};
use crate::model::ClassLabel;
use crate::synth::{arbitrary_session, generate_sessions, SynthConfig};

use super::*;

fn arbitrary_record(rng: &mut ChaCha8Rng, id: u64) -> FullFeatureRecord {
    FullFeatureRecord {
        session: arbitrary_session(rng, id),
        host: HostFeatures {
            dst_host_count: rng.random_range(0..=100),
            dst_host_same_src_port_count: rng.random_range(0..=100),
            dst_host_serror_count: rng.random_range(0..=100),
            dst_host_srv_count: rng.random_range(0..=100),
            dst_host_srv_serror_count: rng.random_range(0..=100),
        },
    }
}

fn synth_source(n: usize, seed: u64) -> Vec<crate::model::SessionRecord> {
    generate_sessions(
        &SynthConfig { sessions: n, ..SynthConfig::default() },
        seed,
    )
    .into_iter()
    .map(|(s, _)| s)
    .collect()
}

// -- codec -----------------------------------------------------------------

#[test]
fn codec_round_trips_ten_thousand_randomized_records() {
    let schema = record_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for id in 0..10_000 {
        let record = arbitrary_record(&mut rng, id);
        let bytes = encode_record(&record, schema);
        assert_eq!(decode_record(&bytes, schema).unwrap(), record);
    }
}

#[test]
fn codec_rejects_wrong_fingerprint() {
    let schema = record_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bytes = encode_record(&arbitrary_record(&mut rng, 1), schema);
    bytes[0] ^= 0xff;
    assert!(matches!(
        decode_record(&bytes, schema),
        Err(CodecError::FingerprintMismatch { .. })
    ));
}

#[test]
fn codec_rejects_truncation_at_every_length() {
    let schema = record_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bytes = encode_record(&arbitrary_record(&mut rng, 1), schema);
    for cut in 0..bytes.len() {
        assert!(decode_record(&bytes[..cut], schema).is_err(), "cut at {cut}");
    }
}

#[test]
fn codec_rejects_trailing_bytes() {
    let schema = record_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bytes = encode_record(&arbitrary_record(&mut rng, 1), schema);
    bytes.push(0);
    assert_eq!(decode_record(&bytes, schema), Err(CodecError::TrailingBytes(1)));
}

/// Frozen encoding of a fixed record; any layout change must be a
/// deliberate schema revision.
#[test]
fn codec_golden_record_is_byte_exact() {
    let record = FullFeatureRecord {
        session: crate::model::SessionRecord {
            session_id: 42,
            timestamp_ms: 1_600_000_000_123,
            duration_s: 1.5,
            five_tuple: crate::model::FiveTuple {
                src_addr: "10.0.1.7".parse().unwrap(),
                src_port: 52_113,
                dst_addr: "10.0.2.3".parse().unwrap(),
                dst_port: 443,
                protocol: crate::model::Protocol::Tcp,
            },
            service: crate::model::ServiceType::Https,
            conn_state: crate::model::ConnState::SF,
            direction: crate::model::Direction::L2L,
            src_packets: 12,
            src_bytes: 3_000,
            src_ip_bytes: 3_640,
            dst_packets: 10,
            dst_bytes: 90_000,
            dst_ip_bytes: 90_532,
        },
        host: HostFeatures {
            dst_host_count: 17,
            dst_host_same_src_port_count: 3,
            dst_host_serror_count: 0,
            dst_host_srv_count: 9,
            dst_host_srv_serror_count: 1,
        },
    };
    let bytes = encode_record(&record, record_schema());
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, GOLDEN_RECORD_HEX);
}

const GOLDEN_RECORD_HEX: &str = "69ea6504e4fcbfd82af681f4f6905d000000000000f83f0831302e302e312e379197030831302e302e322e33bb0303746370056874747073025346034c324c0cb817b81c0a90bf05a4c3051103000901";

// -- pipeline --------------------------------------------------------------

#[test]
fn pipeline_conserves_every_session_with_null_classifier() {
    let sessions = synth_source(10_000, 5);
    let mut sink = EmbeddedSink::default();
    let summary = run_pipeline(
        &PipelineConfig::default(),
        sessions.clone().into_iter(),
        &ClassifierStage::Null,
        &mut sink,
    )
    .unwrap();

    assert_eq!(summary.ingested, 10_000);
    assert_eq!(summary.inserted, 10_000);
    assert_eq!(summary.classifier_errors, 0);
    assert!(summary.decode_failures.is_empty());
    assert!(summary.sink_failures.is_empty());

    let mut source_ids: Vec<u64> = sessions.iter().map(|s| s.session_id).collect();
    let mut sink_ids: Vec<u64> =
        sink.records.iter().map(|r| r.record.session.session_id).collect();
    source_ids.sort_unstable();
    sink_ids.sort_unstable();
    assert_eq!(source_ids, sink_ids);

    for e in &summary.timeline {
        assert!(e.created_at <= e.encoded_at);
        assert!(e.encoded_at <= e.classified_at);
        assert!(e.classified_at <= e.inserted_at);
    }
}

#[test]
fn pipeline_contents_are_independent_of_capacity_and_workers() {
    let sessions = synth_source(2_000, 9);
    let run = |capacity: usize, workers: usize| {
        let mut sink = EmbeddedSink::default();
        run_pipeline(
            &PipelineConfig {
                queue_capacity: capacity,
                classifier_worker_count: workers,
                ..PipelineConfig::default()
            },
            sessions.clone().into_iter(),
            &ClassifierStage::Null,
            &mut sink,
        )
        .unwrap();
        let mut rows: Vec<(u64, FullFeatureRecord)> = sink
            .records
            .into_iter()
            .map(|r| (r.record.session.session_id, r.record))
            .collect();
        rows.sort_by_key(|(id, _)| *id);
        rows
    };
    let tiny = run(1, 1);
    let wide = run(10_000, 4);
    // Identical multisets including every host-feature value: only the
    // single-threaded feature stage touches window state.
    assert_eq!(tiny, wide);
}

fn model_and_spec(
    sessions: &[crate::model::SessionRecord],
    labels: &[ClassLabel],
) -> (crate::classifiers::TrainedModel, crate::features::NormalizationSpec) {
    let mut window = HostWindow::new();
    let records: Vec<FullFeatureRecord> = sessions
        .iter()
        .map(|s| FullFeatureRecord { session: s.clone(), host: window.update_and_extract(s) })
        .collect();
    let spec = fit_normalization(&records).unwrap();
    let vectors = records.iter().map(|r| strip_and_encode(r, &spec)).collect();
    let data = Dataset::new(vectors, labels.to_vec(), spec.fingerprint()).unwrap();
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    (model, spec)
}

#[test]
fn pipeline_classifies_with_a_real_model() {
    let rows = generate_sessions(&SynthConfig { sessions: 2_000, ..SynthConfig::default() }, 21);
    let sessions: Vec<_> = rows.iter().map(|(s, _)| s.clone()).collect();
    let labels: Vec<_> = rows.iter().map(|(_, l)| *l).collect();
    let (model, spec) = model_and_spec(&sessions, &labels);

    let mut sink = EmbeddedSink::default();
    let classifier = ClassifierStage::Model {
        model: std::sync::Arc::new(model),
        spec: std::sync::Arc::new(spec),
    };
    let summary = run_pipeline(
        &PipelineConfig::default(),
        sessions.into_iter(),
        &classifier,
        &mut sink,
    )
    .unwrap();
    assert_eq!(summary.inserted, 2_000);
    assert_eq!(summary.classifier_errors, 0);
    // The training data is cleanly shaped, so the in-pipeline predictions
    // should overwhelmingly match the generating labels.
    let mut by_id: std::collections::HashMap<u64, ClassLabel> = std::collections::HashMap::new();
    for (s, l) in &rows {
        by_id.insert(s.session_id, *l);
    }
    let agree = sink
        .records
        .iter()
        .filter(|r| by_id[&r.record.session.session_id] == r.label)
        .count();
    assert!(agree as f64 / 2_000.0 > 0.95, "agreement {agree}/2000");
}

#[test]
fn pipeline_spec_mismatch_is_rejected_up_front() {
    let rows = generate_sessions(&SynthConfig { sessions: 200, ..SynthConfig::default() }, 23);
    let sessions: Vec<_> = rows.iter().map(|(s, _)| s.clone()).collect();
    let labels: Vec<_> = rows.iter().map(|(_, l)| *l).collect();
    let (model, _) = model_and_spec(&sessions, &labels);
    // A spec refit on different data has a different fingerprint.
    let other_rows = generate_sessions(&SynthConfig { sessions: 50, ..SynthConfig::default() }, 99);
    let mut window = HostWindow::new();
    let other_records: Vec<FullFeatureRecord> = other_rows
        .iter()
        .map(|(s, _)| FullFeatureRecord { session: s.clone(), host: window.update_and_extract(s) })
        .collect();
    let other_spec = fit_normalization(&other_records).unwrap();

    let classifier = ClassifierStage::Model {
        model: std::sync::Arc::new(model),
        spec: std::sync::Arc::new(other_spec),
    };
    let mut sink = NullSink;
    let err = run_pipeline(
        &PipelineConfig::default(),
        sessions.into_iter(),
        &classifier,
        &mut sink,
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::SpecMismatch(_)));
}

/// A model whose input dimension disagrees with the spec it claims, to
/// force per-session prediction failures past the up-front gate.
fn broken_classifier(spec: &crate::features::NormalizationSpec) -> ClassifierStage {
    let data = Dataset::new(
        vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        vec![ClassLabel::Normal, ClassLabel::Abnormal],
        spec.fingerprint(),
    )
    .unwrap();
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    ClassifierStage::Model {
        model: std::sync::Arc::new(model),
        spec: std::sync::Arc::new(spec.clone()),
    }
}

#[test]
fn pipeline_fail_open_flags_and_conserves() {
    let sessions = synth_source(500, 31);
    let mut window = HostWindow::new();
    let records: Vec<FullFeatureRecord> = sessions
        .iter()
        .map(|s| FullFeatureRecord { session: s.clone(), host: window.update_and_extract(s) })
        .collect();
    let spec = fit_normalization(&records).unwrap();

    let mut sink = EmbeddedSink::default();
    let summary = run_pipeline(
        &PipelineConfig::default(),
        sessions.into_iter(),
        &broken_classifier(&spec),
        &mut sink,
    )
    .unwrap();
    assert_eq!(summary.inserted, 500);
    assert_eq!(summary.classifier_errors, 500);
    assert!(sink.records.iter().all(|r| {
        r.error && r.label == ClassLabel::Normal && r.score == 0.0
    }));
}

#[test]
fn pipeline_fail_closed_aborts_with_the_session_id() {
    let sessions = synth_source(500, 37);
    let mut window = HostWindow::new();
    let records: Vec<FullFeatureRecord> = sessions
        .iter()
        .map(|s| FullFeatureRecord { session: s.clone(), host: window.update_and_extract(s) })
        .collect();
    let spec = fit_normalization(&records).unwrap();

    let mut sink = EmbeddedSink::default();
    let err = run_pipeline(
        &PipelineConfig { on_classifier_error: FailPolicy::Closed, ..PipelineConfig::default() },
        sessions.into_iter(),
        &broken_classifier(&spec),
        &mut sink,
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::ClassifierFailed { .. }));
}

struct FlakySink {
    /// Write attempts that fail before each record succeeds.
    failures_per_record: usize,
    attempts: AtomicUsize,
    written: Vec<SinkRecord>,
}

impl Sink for FlakySink {
    fn write(&mut self, record: &SinkRecord) -> io::Result<()> {
        let n = self.attempts.fetch_add(1, Ordering::Relaxed);
        if n % (self.failures_per_record + 1) < self.failures_per_record {
            return Err(io::Error::other("transient sink failure"));
        }
        self.written.push(record.clone());
        Ok(())
    }
}

#[test]
fn sink_retries_absorb_transient_failures() {
    let sessions = synth_source(200, 41);
    let mut sink =
        FlakySink { failures_per_record: 2, attempts: AtomicUsize::new(0), written: Vec::new() };
    let summary = run_pipeline(
        &PipelineConfig::default(),
        sessions.into_iter(),
        &ClassifierStage::Null,
        &mut sink,
    )
    .unwrap();
    // Two failures per record sit within the three-attempt budget.
    assert_eq!(summary.inserted, 200);
    assert!(summary.sink_failures.is_empty());
    assert_eq!(sink.written.len(), 200);
}

struct DeadSink;

impl Sink for DeadSink {
    fn write(&mut self, _record: &SinkRecord) -> io::Result<()> {
        Err(io::Error::other("sink down"))
    }
}

#[test]
fn persistent_sink_failures_are_counted_per_session() {
    let sessions = synth_source(50, 43);
    let summary = run_pipeline(
        &PipelineConfig::default(),
        sessions.into_iter(),
        &ClassifierStage::Null,
        &mut DeadSink,
    )
    .unwrap();
    assert_eq!(summary.inserted, 0);
    assert_eq!(summary.sink_failures.len(), 50);
    assert_eq!(summary.ingested, summary.inserted + summary.sink_failures.len());
}

#[test]
fn empty_source_completes_immediately() {
    let mut sink = EmbeddedSink::default();
    let summary = run_pipeline(
        &PipelineConfig::default(),
        std::iter::empty(),
        &ClassifierStage::Null,
        &mut sink,
    )
    .unwrap();
    assert_eq!(summary.ingested, 0);
    assert_eq!(summary.inserted, 0);
    assert!(sink.records.is_empty());
}

#[test]
fn replay_rate_paces_the_run() {
    // 3,000 sessions at 1,000/s: the initial burst covers the first
    // thousand, the rest drain at the configured rate (~2 s total).
    let sessions = synth_source(3_000, 47);
    let start = Instant::now();
    let summary = run_pipeline(
        &PipelineConfig { replay_rate: Some(1000.0), ..PipelineConfig::default() },
        sessions.into_iter(),
        &ClassifierStage::Null,
        &mut NullSink,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(summary.inserted, 3_000);
    assert!(elapsed > 1.5, "elapsed {elapsed}");
    assert!(elapsed < 4.5, "elapsed {elapsed}");
}

#[test]
fn busy_ratios_are_bounded_and_idle_stages_read_near_zero() {
    let sessions = synth_source(300, 53);
    let summary = run_pipeline(
        &PipelineConfig { replay_rate: Some(300.0), ..PipelineConfig::default() },
        sessions.into_iter(),
        &ClassifierStage::Null,
        &mut NullSink,
    )
    .unwrap();
    let ratios = stage_busy_ratio(&summary);
    for (stage, ratio) in &ratios {
        let bound =
            if stage == "classifier_total" { summary.worker_count as f64 } else { 1.0 };
        assert!((0.0..=bound).contains(ratio), "{stage} ratio {ratio}");
    }
    // The null classifier does almost nothing at this trickle rate.
    assert!(ratios["classifier_total"] < 0.05, "{}", ratios["classifier_total"]);
}

#[test]
fn pipeline_config_validation_rejects_degenerate_values() {
    for config in [
        PipelineConfig { queue_capacity: 0, ..PipelineConfig::default() },
        PipelineConfig { classifier_worker_count: 0, ..PipelineConfig::default() },
        PipelineConfig { replay_rate: Some(0.0), ..PipelineConfig::default() },
    ] {
        assert!(config.validate().is_err());
    }
}

// -- session log I/O -------------------------------------------------------

#[test]
fn session_log_round_trips_with_snake_case_field_names() {
    let sessions = synth_source(50, 61);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    write_sessions_jsonl(&path, &sessions).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let first = text.lines().next().unwrap();
    for field in [
        "\"timestamp\"",
        "\"duration\"",
        "\"src_ip\"",
        "\"src_port\"",
        "\"dst_ip\"",
        "\"dst_port\"",
        "\"protocol\"",
        "\"service\"",
        "\"conn_state\"",
        "\"direction\"",
        "\"src_packets\"",
        "\"src_ip_bytes\"",
    ] {
        assert!(first.contains(field), "missing {field} in {first}");
    }
    assert_eq!(read_sessions_jsonl(&path).unwrap(), sessions);
}

#[test]
fn labeled_session_log_round_trips() {
    let sessions = synth_source(10, 67);
    let labeled: Vec<LabeledSession> = sessions
        .into_iter()
        .enumerate()
        .map(|(i, session)| LabeledSession {
            session,
            label: if i % 3 == 0 { ClassLabel::Abnormal } else { ClassLabel::Normal },
            attack_category: (i % 3 == 0).then(|| "scan".to_string()),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labeled.jsonl");
    write_labeled_sessions(&path, &labeled).unwrap();
    assert_eq!(read_labeled_sessions(&path).unwrap(), labeled);
}

#[test]
fn malformed_session_line_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let sessions = synth_source(2, 71);
    let good = serde_json::to_string(&sessions[0]).unwrap();
    std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
    match read_sessions_jsonl(&path) {
        Err(SessionIoError::Malformed { line: 2, .. }) => {}
        other => panic!("expected malformed line 2, got {other:?}"),
    }
}

// -- ground truth ----------------------------------------------------------

fn truth_row(start: f64, end: f64) -> GroundTruthRow {
    GroundTruthRow {
        src: "172.16.0.1".parse().unwrap(),
        sport: 4444,
        dst: "10.0.2.1".parse().unwrap(),
        dport: 80,
        proto: crate::model::Protocol::Tcp,
        start_time: start,
        end_time: end,
        attack_cat: "Exploits".to_string(),
    }
}

fn truth_session(id: u64, start_s: f64, duration: f64) -> crate::model::SessionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(id);
    let mut s = arbitrary_session(&mut rng, id);
    s.timestamp_ms = (start_s * 1000.0) as i64;
    s.duration_s = duration;
    s.five_tuple = crate::model::FiveTuple {
        src_addr: "172.16.0.1".parse().unwrap(),
        src_port: 4444,
        dst_addr: "10.0.2.1".parse().unwrap(),
        dst_port: 80,
        protocol: crate::model::Protocol::Tcp,
    };
    s
}

#[test]
fn truth_overlap_labels_abnormal_with_category() {
    let sessions = vec![truth_session(1, 100.0, 5.0)];
    let (labeled, stats) = label_sessions(&sessions, &[truth_row(102.0, 110.0)]);
    assert_eq!(labeled[0].label, ClassLabel::Abnormal);
    assert_eq!(labeled[0].attack_category.as_deref(), Some("Exploits"));
    assert_eq!(stats.abnormal, 1);
}

#[test]
fn truth_no_match_stays_normal() {
    // Same window but a different destination port.
    let mut s = truth_session(2, 100.0, 5.0);
    s.five_tuple.dst_port = 81;
    let (labeled, stats) = label_sessions(&[s], &[truth_row(100.0, 110.0)]);
    assert_eq!(labeled[0].label, ClassLabel::Normal);
    assert!(labeled[0].attack_category.is_none());
    assert_eq!(stats.abnormal, 0);
}

#[test]
fn truth_tolerance_edges_are_inclusive() {
    // Session [200, 205]; attack [206, 210]: the −1 s tolerance makes the
    // effective window start 205, touching the session end exactly.
    let at_edge = truth_session(3, 200.0, 5.0);
    let (labeled, _) = label_sessions(&[at_edge], &[truth_row(206.0, 210.0)]);
    assert_eq!(labeled[0].label, ClassLabel::Abnormal);

    // One second further out misses.
    let beyond = truth_session(4, 200.0, 5.0);
    let (labeled, _) = label_sessions(&[beyond], &[truth_row(206.001, 210.0)]);
    assert_eq!(labeled[0].label, ClassLabel::Normal);

    // Symmetric case at the +1 s end.
    let tail = truth_session(5, 211.0, 5.0);
    let (labeled, _) = label_sessions(&[tail], &[truth_row(205.0, 210.0)]);
    assert_eq!(labeled[0].label, ClassLabel::Abnormal);
}

#[test]
fn truth_csv_loader_counts_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.csv");
    std::fs::write(
        &path,
        "src,sport,dst,dport,proto,start_time,end_time,attack_cat\n\
         172.16.0.1,4444,10.0.2.1,80,tcp,100,110,Exploits\n\
         not-an-ip,4444,10.0.2.1,80,tcp,100,110,Exploits\n\
         172.16.0.2,1,10.0.2.9,53,udp,50,60,Recon\n",
    )
    .unwrap();
    let (rows, skipped) = load_ground_truth(&path).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(skipped, 1);
}
