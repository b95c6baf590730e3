//! Pluggable single-writer sinks for classified sessions.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::SinkRecord;

pub trait Sink: Send {
    fn write(&mut self, record: &SinkRecord) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// One JSON object per line.
pub struct JsonlSink {
    writer: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> io::Result<JsonlSink> {
        Ok(JsonlSink { writer: BufWriter::new(File::create(path)?) })
    }
}

impl Sink for JsonlSink {
    fn write(&mut self, record: &SinkRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// In-memory store, retrievable after the run.
#[derive(Debug, Default)]
pub struct EmbeddedSink {
    pub records: Vec<SinkRecord>,
}

impl Sink for EmbeddedSink {
    fn write(&mut self, record: &SinkRecord) -> io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Discards everything; used for pure throughput measurements.
#[derive(Debug, Default)]
pub struct NullSink;

impl Sink for NullSink {
    fn write(&mut self, _record: &SinkRecord) -> io::Result<()> {
        Ok(())
    }
}
