//! Session-log JSONL: one session object per line with the basic-feature
//! field names in snake_case. Labeled logs add `label` and, for attack
//! sessions, `attack_category`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClassLabel, SessionRecord};

#[derive(Debug, Error)]
pub enum SessionIoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Malformed { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSession {
    #[serde(flatten)]
    pub session: SessionRecord,
    pub label: ClassLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_category: Option<String>,
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, SessionIoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|source| SessionIoError::Malformed { line: i + 1, source })?,
        );
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SessionIoError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut writer, row).map_err(io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_sessions_jsonl(path: &Path) -> Result<Vec<SessionRecord>, SessionIoError> {
    read_lines(path)
}

pub fn write_sessions_jsonl(path: &Path, sessions: &[SessionRecord]) -> Result<(), SessionIoError> {
    write_lines(path, sessions)
}

pub fn read_labeled_sessions(path: &Path) -> Result<Vec<LabeledSession>, SessionIoError> {
    read_lines(path)
}

pub fn write_labeled_sessions(
    path: &Path,
    sessions: &[LabeledSession],
) -> Result<(), SessionIoError> {
    write_lines(path, sessions)
}
