//! The four subcommand implementations. Each writes its artifacts plus
//! `resolved_config.toml` into the run directory and prints a one-line
//! summary to stdout.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use nids_core::assembler::{assemble_all, read_packets_jsonl, read_pcap};
use nids_core::classifiers::{load_model, save_model, Dataset, TrainError};
use nids_core::features::{
    fit_normalization, strip_and_encode, FullFeatureRecord, HostWindow, NormalizationSpec,
};
use nids_core::pipeline::{
    label_sessions, load_ground_truth, read_labeled_sessions, read_sessions_jsonl, run_pipeline,
    stage_busy_ratio, write_labeled_sessions, write_sessions_jsonl, ClassifierStage, JsonlSink,
    LabeledSession, NullSink, PipelineError, Sink,
};
use nids_core::report::{
    aggregate_reports, emit_report, BenchReport, ReportFormat, RunMetadata,
};
use nids_core::seeding::sub_seed;
use nids_core::selection::{
    downsample, evaluate, grid_search, search_result_csv, search_result_json, stratified_split,
    Algorithm, GridSpec, SelectionError,
};

use crate::config::{ResolvedConfig, RunConfig};
use crate::{CliError, CommonArgs};

// -- shared helpers --------------------------------------------------------

fn env_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Environment(format!("{}: {e}", path.display()))
}

fn init_run_dir(common: &CommonArgs, command: &str, config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&common.run_dir).map_err(env_at(&common.run_dir))?;
    let resolved =
        ResolvedConfig { command: command.to_string(), seed: common.seed, config: config.clone() };
    let text = toml::to_string_pretty(&resolved)
        .map_err(|e| CliError::Internal(format!("resolved config serialization: {e}")))?;
    let path = common.run_dir.join("resolved_config.toml");
    fs::write(&path, text).map_err(env_at(&path))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Internal(format!("json serialization: {e}")))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(env_at(path))
}

fn selection_error(err: SelectionError) -> CliError {
    match err {
        SelectionError::InvalidGrid(_) | SelectionError::UnknownAlgorithm(_) => {
            CliError::Usage(err.to_string())
        }
        SelectionError::Train { ref source, .. } => match source {
            TrainError::InvalidParam(_) | TrainError::KTooLarge { .. } => {
                CliError::Usage(err.to_string())
            }
            _ => CliError::Environment(err.to_string()),
        },
        other => CliError::Environment(other.to_string()),
    }
}

fn train_error(err: TrainError) -> CliError {
    match err {
        TrainError::InvalidParam(_) | TrainError::KTooLarge { .. } => {
            CliError::Usage(err.to_string())
        }
        other => CliError::Environment(other.to_string()),
    }
}

// -- assemble --------------------------------------------------------------

pub(crate) fn assemble(
    common: &CommonArgs,
    pcap: Option<&Path>,
    packets_jsonl: Option<&Path>,
) -> Result<(), CliError> {
    let config = RunConfig::load(common.config.as_deref())?;
    let (events, input_stats) = match (pcap, packets_jsonl) {
        (Some(path), None) => {
            let file = fs::File::open(path).map_err(env_at(path))?;
            let result = read_pcap(BufReader::new(file)).map_err(CliError::env)?;
            let stats = json!({ "skipped": result.skipped, "truncated": result.truncated });
            (result.events, stats)
        }
        (None, Some(path)) => {
            let file = fs::File::open(path).map_err(env_at(path))?;
            let events = read_packets_jsonl(BufReader::new(file)).map_err(CliError::env)?;
            (events, json!({}))
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --pcap or --packets-jsonl is required".to_string(),
            ))
        }
    };
    init_run_dir(common, "assemble", &config)?;

    let packet_count = events.len();
    let (sessions, stats) = assemble_all(events, config.assembler.clone());
    let out = common.run_dir.join("sessions.jsonl");
    write_sessions_jsonl(&out, &sessions).map_err(CliError::env)?;
    write_json(
        &common.run_dir.join("assembly_stats.json"),
        &json!({ "packets": packet_count, "input": input_stats, "assembler": stats }),
    )?;
    println!(
        "assembled {} sessions from {} packets into {}",
        sessions.len(),
        packet_count,
        out.display()
    );
    Ok(())
}

// -- label -----------------------------------------------------------------

pub(crate) fn label(
    common: &CommonArgs,
    sessions_path: &Path,
    ground_truth: &Path,
) -> Result<(), CliError> {
    let config = RunConfig::load(common.config.as_deref())?;
    init_run_dir(common, "label", &config)?;

    let sessions = read_sessions_jsonl(sessions_path).map_err(CliError::env)?;
    let (truth, skipped_rows) = load_ground_truth(ground_truth).map_err(CliError::env)?;
    let (labeled, stats) = label_sessions(&sessions, &truth);
    let out = common.run_dir.join("labeled_sessions.jsonl");
    write_labeled_sessions(&out, &labeled).map_err(CliError::env)?;
    write_json(
        &common.run_dir.join("label_stats.json"),
        &json!({
            "sessions": stats.sessions,
            "abnormal": stats.abnormal,
            "normal": stats.sessions - stats.abnormal,
            "truth_rows": truth.len(),
            "skipped_truth_rows": skipped_rows,
        }),
    )?;
    println!(
        "labeled {} sessions ({} abnormal) into {}",
        stats.sessions,
        stats.abnormal,
        out.display()
    );
    Ok(())
}

// -- train -----------------------------------------------------------------

/// Streams the sessions through the host window in log order and encodes
/// them under a freshly fitted normalization spec. The dataset's spec
/// version is the spec fingerprint, which ties every downstream model to
/// this exact encoding.
fn encode_labeled(
    labeled: &[LabeledSession],
) -> Result<(Dataset, NormalizationSpec), CliError> {
    let mut window = HostWindow::new();
    let records: Vec<FullFeatureRecord> = labeled
        .iter()
        .map(|l| {
            let host = window.update_and_extract(&l.session);
            FullFeatureRecord { session: l.session.clone(), host }
        })
        .collect();
    let spec = fit_normalization(&records).map_err(CliError::env)?;
    let vectors = records.iter().map(|r| strip_and_encode(r, &spec)).collect();
    let labels = labeled.iter().map(|l| l.label).collect();
    let data = Dataset::new(vectors, labels, spec.fingerprint()).map_err(CliError::env)?;
    Ok((data, spec))
}

fn parse_params(s: &str) -> Result<Vec<(String, f64)>, CliError> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(s)
        .map_err(|e| CliError::Usage(format!("--params must be a JSON object: {e}")))?;
    map.into_iter()
        .map(|(name, value)| {
            let v = match value {
                serde_json::Value::Number(n) => n.as_f64(),
                serde_json::Value::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
                _ => None,
            };
            v.map(|v| (name.clone(), v))
                .ok_or_else(|| CliError::Usage(format!("parameter {name:?} must be numeric")))
        })
        .collect()
}

pub(crate) fn train(
    common: &CommonArgs,
    labeled_path: &Path,
    algo: &str,
    params: Option<&str>,
    search: Option<&Path>,
) -> Result<(), CliError> {
    let algo = Algorithm::parse(algo).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = RunConfig::load(common.config.as_deref())?;
    init_run_dir(common, "train", &config)?;

    let labeled = read_labeled_sessions(labeled_path).map_err(CliError::env)?;
    if labeled.is_empty() {
        return Err(CliError::Environment(format!(
            "{}: no labeled sessions",
            labeled_path.display()
        )));
    }
    let (full, spec) = encode_labeled(&labeled)?;
    let balanced =
        downsample(&full, sub_seed(common.seed, "downsample")).map_err(selection_error)?;

    let (chosen_params, searched) = if let Some(grid_path) = search {
        let text = fs::read_to_string(grid_path).map_err(env_at(grid_path))?;
        let grid: GridSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Environment(format!("{}: {e}", grid_path.display())))?;
        let (train_set, validation) =
            stratified_split(&balanced, 0.7, sub_seed(common.seed, "split"));
        let result =
            grid_search(algo, &grid, &train_set, &validation, sub_seed(common.seed, "train"))
                .map_err(selection_error)?;
        let json_path = common.run_dir.join("search.json");
        fs::write(&json_path, search_result_json(&result)).map_err(env_at(&json_path))?;
        let csv_path = common.run_dir.join("search.csv");
        fs::write(&csv_path, search_result_csv(&result)).map_err(env_at(&csv_path))?;
        (result.best_params, true)
    } else if let Some(p) = params {
        (parse_params(p)?, false)
    } else {
        (Vec::new(), false)
    };

    let model = algo
        .train(&balanced, &chosen_params, sub_seed(common.seed, "train"))
        .map_err(train_error)?;
    let predictions: Vec<_> = balanced
        .vectors
        .iter()
        .map(|v| model.predict(v).expect("training vectors match model dimension").0)
        .collect();
    let metrics = evaluate(&predictions, &balanced.labels).map_err(selection_error)?;

    let model_path = common.run_dir.join("model.json");
    fs::write(&model_path, save_model(&model)).map_err(env_at(&model_path))?;
    let spec_path = common.run_dir.join("normalization.json");
    fs::write(&spec_path, spec.to_json()).map_err(env_at(&spec_path))?;
    write_json(
        &common.run_dir.join("train_summary.json"),
        &json!({
            "algorithm": model.meta.algorithm,
            "params": model.meta.params,
            "spec_fingerprint": spec.fingerprint(),
            "input_rows": labeled.len(),
            "balanced_rows": balanced.len(),
            "grid_searched": searched,
            "convergence_warning": model.meta.convergence_warning,
            "oob_accuracy": model.meta.oob_accuracy,
            "training_metrics": metrics,
        }),
    )?;
    println!(
        "trained {} on {} balanced rows (training F1 {:.3}) into {}",
        model.meta.algorithm,
        balanced.len(),
        metrics.f1,
        model_path.display()
    );
    Ok(())
}

// -- bench -----------------------------------------------------------------

pub(crate) struct BenchArgs<'a> {
    pub common: &'a CommonArgs,
    pub sessions: &'a Path,
    pub model: &'a str,
    pub normalization: Option<&'a Path>,
    pub rate: Option<&'a str>,
    pub runs: usize,
    pub sink: &'a str,
    pub throughput_interval_s: f64,
    pub latency_interval_s: f64,
}

fn parse_rate(s: &str) -> Result<Option<f64>, CliError> {
    if s == "unlimited" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
        _ => Err(CliError::Usage(format!(
            "--rate must be a positive number or \"unlimited\", got {s:?}"
        ))),
    }
}

fn load_classifier(
    model: &str,
    normalization: Option<&Path>,
) -> Result<ClassifierStage, CliError> {
    if model == "null" {
        return Ok(ClassifierStage::Null);
    }
    let model_path = Path::new(model);
    let bytes = fs::read(model_path).map_err(env_at(model_path))?;
    let model = load_model(&bytes)
        .map_err(|e| CliError::Environment(format!("{}: {e}", model_path.display())))?;
    let spec_path: PathBuf = match normalization {
        Some(p) => p.to_path_buf(),
        None => model_path.with_file_name("normalization.json"),
    };
    let text = fs::read_to_string(&spec_path).map_err(env_at(&spec_path))?;
    let spec = NormalizationSpec::from_json(&text)
        .map_err(|e| CliError::Environment(format!("{}: {e}", spec_path.display())))?;
    Ok(ClassifierStage::Model { model: Arc::new(model), spec: Arc::new(spec) })
}

fn pipeline_error(err: PipelineError) -> CliError {
    match err {
        PipelineError::Config(_) | PipelineError::SpecMismatch(_) => {
            CliError::Environment(err.to_string())
        }
        PipelineError::ClassifierFailed { .. } => CliError::Internal(err.to_string()),
    }
}

pub(crate) fn bench(args: BenchArgs<'_>) -> Result<(), CliError> {
    let common = args.common;
    if args.runs < 1 {
        return Err(CliError::Usage("--runs must be >= 1".to_string()));
    }
    if !(args.throughput_interval_s > 0.0) || !(args.latency_interval_s > 0.0) {
        return Err(CliError::Usage("interval widths must be positive".to_string()));
    }
    let mut config = RunConfig::load(common.config.as_deref())?;
    if let Some(rate) = args.rate {
        config.pipeline.replay_rate = parse_rate(rate)?;
    }
    init_run_dir(common, "bench", &config)?;

    let sessions = read_sessions_jsonl(args.sessions).map_err(CliError::env)?;
    if sessions.is_empty() {
        return Err(CliError::Environment(format!(
            "{}: no sessions to replay",
            args.sessions.display()
        )));
    }
    let classifier = load_classifier(args.model, args.normalization)?;
    let (classifier_name, classifier_params) = match &classifier {
        ClassifierStage::Null => ("null".to_string(), serde_json::Value::Null),
        ClassifierStage::Model { model, .. } => {
            (model.meta.algorithm.clone(), model.meta.params.clone())
        }
    };

    let mut reports = Vec::with_capacity(args.runs);
    for run in 0..args.runs {
        let mut sink: Box<dyn Sink> = match args.sink {
            "null" => Box::new(NullSink),
            _ => {
                let path = common.run_dir.join(format!("classified_run{run}.jsonl"));
                Box::new(JsonlSink::create(&path).map_err(env_at(&path))?)
            }
        };
        let summary =
            run_pipeline(&config.pipeline, sessions.iter().cloned(), &classifier, sink.as_mut())
                .map_err(pipeline_error)?;
        let accounted =
            summary.inserted + summary.decode_failures.len() + summary.sink_failures.len();
        if summary.ingested != accounted {
            return Err(CliError::Internal(format!(
                "run {run}: ingested {} sessions but accounted for {accounted}",
                summary.ingested
            )));
        }
        if !summary.decode_failures.is_empty() || !summary.sink_failures.is_empty() {
            eprintln!(
                "warning: run {run} lost {} sessions to decode failures, {} to sink failures",
                summary.decode_failures.len(),
                summary.sink_failures.len()
            );
        }
        let metadata = RunMetadata {
            classifier: classifier_name.clone(),
            params: classifier_params.clone(),
            rate: config.pipeline.replay_rate,
            duration_s: summary.wall_ns as f64 / 1e9,
            seed: common.seed,
        };
        let report = BenchReport::from_events_with_intervals(
            &summary.timeline,
            args.throughput_interval_s,
            args.latency_interval_s,
            stage_busy_ratio(&summary),
            metadata,
        )
        .map_err(|e| CliError::Environment(format!("run {run}: {e}")))?;
        let json_path = common.run_dir.join(format!("report_run{run}.json"));
        fs::write(&json_path, emit_report(&report, ReportFormat::Json))
            .map_err(env_at(&json_path))?;
        let csv_path = common.run_dir.join(format!("report_run{run}.csv"));
        fs::write(&csv_path, emit_report(&report, ReportFormat::Csv))
            .map_err(env_at(&csv_path))?;
        reports.push(report);
    }

    let aggregate = aggregate_reports(reports)
        .map_err(|e| CliError::Internal(format!("aggregation: {e}")))?;
    let agg_path = common.run_dir.join("report.json");
    let mut bytes = serde_json::to_vec_pretty(&aggregate)
        .map_err(|e| CliError::Internal(format!("report serialization: {e}")))?;
    bytes.push(b'\n');
    fs::write(&agg_path, bytes).map_err(env_at(&agg_path))?;
    println!(
        "{} runs of {} sessions: throughput {:.1} sessions/s (min {:.1}, max {:.1}), \
         latency {:.3} ms (min {:.3}, max {:.3}); reports in {}",
        args.runs,
        sessions.len(),
        aggregate.throughput_sessions_per_s.mean,
        aggregate.throughput_sessions_per_s.min,
        aggregate.throughput_sessions_per_s.max,
        aggregate.latency_ms.mean,
        aggregate.latency_ms.min,
        aggregate.latency_ms.max,
        common.run_dir.display()
    );
    Ok(())
}
