//! Ground-truth CSV adapter. A session is ABNORMAL when its 5-tuple
//! matches a truth row and its [start, start + duration] interval overlaps
//! the row's [start_time − 1 s, end_time + 1 s] window (inclusive at both
//! edges).

use std::collections::HashMap;
use std::io;
use std::net::IpAddr;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{Protocol, SessionRecord};

use super::session_io::LabeledSession;
use crate::model::ClassLabel;

#[derive(Debug, Error)]
pub enum TruthError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GroundTruthRow {
    pub src: IpAddr,
    pub sport: u16,
    pub dst: IpAddr,
    pub dport: u16,
    pub proto: Protocol,
    /// Attack start, epoch seconds.
    pub start_time: f64,
    /// Attack end, epoch seconds.
    pub end_time: f64,
    pub attack_cat: String,
}

/// Parses the CSV, counting (not failing on) malformed rows.
pub fn load_ground_truth(path: &Path) -> Result<(Vec<GroundTruthRow>, usize), TruthError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for result in reader.deserialize::<GroundTruthRow>() {
        match result {
            Ok(row) => rows.push(row),
            Err(_) => skipped += 1,
        }
    }
    Ok((rows, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelStats {
    pub sessions: usize,
    pub abnormal: usize,
    pub skipped_truth_rows: usize,
}

type TupleKey = (IpAddr, u16, IpAddr, u16, Protocol);

/// Labels every session against the truth rows; unmatched sessions are
/// NORMAL.
pub fn label_sessions(
    sessions: &[SessionRecord],
    truth: &[GroundTruthRow],
) -> (Vec<LabeledSession>, LabelStats) {
    let mut by_tuple: HashMap<TupleKey, Vec<&GroundTruthRow>> = HashMap::new();
    for row in truth {
        by_tuple
            .entry((row.src, row.sport, row.dst, row.dport, row.proto))
            .or_default()
            .push(row);
    }

    let mut stats = LabelStats { sessions: sessions.len(), ..LabelStats::default() };
    let labeled = sessions
        .iter()
        .map(|s| {
            let start = s.timestamp_ms as f64 / 1000.0;
            let end = start + s.duration_s;
            let t = &s.five_tuple;
            let matched = by_tuple
                .get(&(t.src_addr, t.src_port, t.dst_addr, t.dst_port, t.protocol))
                .and_then(|rows| {
                    rows.iter().find(|r| start <= r.end_time + 1.0 && end >= r.start_time - 1.0)
                });
            let (label, attack_category) = match matched {
                Some(row) => (ClassLabel::Abnormal, Some(row.attack_cat.clone())),
                None => (ClassLabel::Normal, None),
            };
            if label.is_abnormal() {
                stats.abnormal += 1;
            }
            LabeledSession { session: s.clone(), label, attack_category }
        })
        .collect();
    (labeled, stats)
}
