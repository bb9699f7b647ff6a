//! Telemetry files: one [`TelemetryRecord`] JSON object per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use koboshi::telemetry::TelemetryRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("telemetry io: {0}")]
    Io(#[from] io::Error),
    #[error("telemetry line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn record_line(record: &TelemetryRecord) -> String {
    serde_json::to_string(record).expect("telemetry records serialize")
}

/// Streams records to a file.
pub struct TelemetryWriter<W: Write> {
    out: BufWriter<W>,
    written: u64,
}

impl TelemetryWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write> TelemetryWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { out: BufWriter::new(inner), written: 0 }
    }

    pub fn write(&mut self, record: &TelemetryRecord) -> io::Result<()> {
        self.out.write_all(record_line(record).as_bytes())?;
        self.out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| e.into_error())
    }
}

pub fn write_telemetry(records: &[TelemetryRecord], path: impl AsRef<Path>) -> io::Result<()> {
    let mut w = TelemetryWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish().map(drop)
}

pub fn read_telemetry(path: impl AsRef<Path>) -> Result<Vec<TelemetryRecord>, TelemetryError> {
    parse_telemetry(BufReader::new(File::open(path)?))
}

/// Parses records from any line source. Blank lines are skipped.
pub fn parse_telemetry(reader: impl BufRead) -> Result<Vec<TelemetryRecord>, TelemetryError> {
    let mut records = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let text = std::str::from_utf8(&line)
            .map_err(|e| TelemetryError::Parse { line: idx + 1, message: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(text)
            .map_err(|e| TelemetryError::Parse { line: idx + 1, message: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}
