//! Operator CLI: assemble captures into session logs, label them against
//! ground truth, train/search classifiers, and replay sessions through the
//! pipeline for benchmark reports. Every run directory receives the fully
//! resolved configuration and seed so results are reproducible.

mod commands;
mod config;

pub use config::{ResolvedConfig, RunConfig};

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Exit codes: 0 success, 1 usage error, 2 I/O or configuration error,
/// 3 internal invariant violation.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Environment(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Environment(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn env(err: impl std::fmt::Display) -> CliError {
        CliError::Environment(err.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "nids", about = "Streaming session classification pipeline", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML file with [assembler] and [pipeline] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; every randomized component derives a named sub-stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for artifacts and the resolved configuration.
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assemble packets (pcap or JSONL) into a session log.
    Assemble {
        #[command(flatten)]
        common: CommonArgs,
        /// Packet capture file (classic pcap, Ethernet link type).
        #[arg(long, conflicts_with = "packets_jsonl")]
        pcap: Option<PathBuf>,
        /// Packet stream as JSON lines.
        #[arg(long)]
        packets_jsonl: Option<PathBuf>,
    },
    /// Label a session log against a ground-truth CSV.
    Label {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Train a classifier (fixed parameters or grid search).
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        labeled_sessions: PathBuf,
        /// One of: dt, rf, nb, svm, knn.
        #[arg(long)]
        algo: String,
        /// JSON object of parameter overrides, e.g. '{"confidence_c":0.25}'.
        #[arg(long, conflicts_with = "search")]
        params: Option<String>,
        /// Grid-spec JSON file; runs a search and trains the best point.
        #[arg(long)]
        search: Option<PathBuf>,
    },
    /// Replay a session log through the pipeline and report metrics.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        sessions: PathBuf,
        /// Path to a trained model file, or "null" for the pass-through
        /// classifier.
        #[arg(long)]
        model: String,
        /// Normalization spec path; defaults to normalization.json beside
        /// the model.
        #[arg(long)]
        normalization: Option<PathBuf>,
        /// Sessions per second, or "unlimited"; overrides the config file.
        #[arg(long)]
        rate: Option<String>,
        /// Measurement repetitions aggregated as mean with min/max.
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Sink for classified sessions.
        #[arg(long, default_value = "jsonl", value_parser = ["jsonl", "null"])]
        sink: String,
        #[arg(long, default_value_t = nids_core::report::THROUGHPUT_INTERVAL_S)]
        throughput_interval_s: f64,
        #[arg(long, default_value_t = nids_core::report::LATENCY_INTERVAL_S)]
        latency_interval_s: f64,
    },
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Assemble { common, pcap, packets_jsonl } => {
            commands::assemble(&common, pcap.as_deref(), packets_jsonl.as_deref())
        }
        Command::Label { common, sessions, ground_truth } => {
            commands::label(&common, &sessions, &ground_truth)
        }
        Command::Train { common, labeled_sessions, algo, params, search } => commands::train(
            &common,
            &labeled_sessions,
            &algo,
            params.as_deref(),
            search.as_deref(),
        ),
        Command::Bench {
            common,
            sessions,
            model,
            normalization,
            rate,
            runs,
            sink,
            throughput_interval_s,
            latency_interval_s,
        } => commands::bench(commands::BenchArgs {
            common: &common,
            sessions: &sessions,
            model: &model,
            normalization: normalization.as_deref(),
            rate: rate.as_deref(),
            runs,
            sink: &sink,
            throughput_interval_s,
            latency_interval_s,
        }),
    }
}
