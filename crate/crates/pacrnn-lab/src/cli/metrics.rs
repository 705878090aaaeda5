use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::EpochRecord;

/// What a metrics log measured; stored beside the log so plots can label it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLabel {
    pub variant: String,
    pub corpus: String,
    pub stage: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub epoch: usize,
    pub wall_seconds: f64,
}

/// `metrics.jsonl` -> `metrics.<suffix>`.
pub fn sidecar(log: &Path, suffix: &str) -> PathBuf {
    let stem = log.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    log.with_file_name(format!("{}.{}", stem, suffix))
}

/// Appends one JSON line per epoch, flushing each line. Wall-clock times go
/// to a separate timings file so the metrics log itself is reproducible.
pub struct MetricsWriter {
    log: File,
    timings: File,
    path: PathBuf,
    start: Instant,
}

impl MetricsWriter {
    pub fn create(path: &Path, label: &RunLabel) -> Result<MetricsWriter> {
        let open = |p: &Path| File::create(p).map_err(|e| Error::from(e).at_path(p));
        let label_path = sidecar(path, "label.json");
        std::fs::write(&label_path, serde_json::to_vec_pretty(label).expect("label serialises"))
            .map_err(|e| Error::from(e).at_path(&label_path))?;
        Ok(MetricsWriter {
            log: open(path)?,
            timings: open(&sidecar(path, "timings.jsonl"))?,
            path: path.to_path_buf(),
            start: Instant::now(),
        })
    }

    pub fn record(&mut self, record: &EpochRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("record serialises");
        writeln!(self.log, "{}", line).map_err(|e| Error::from(e).at_path(&self.path))?;
        self.log.flush()?;
        let timing = EpochTiming { epoch: record.epoch, wall_seconds: self.start.elapsed().as_secs_f64() };
        writeln!(self.timings, "{}", serde_json::to_string(&timing).expect("timing serialises"))?;
        Ok(())
    }
}

/// Writes a complete log at once.
pub fn write_metrics(path: &Path, label: &RunLabel, records: &[EpochRecord]) -> Result<()> {
    let mut w = MetricsWriter::create(path, label)?;
    for r in records {
        w.record(r)?;
    }
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = File::open(path).map_err(|e| Error::from(e).at_path(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::from(e).at_path(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Data(format!("{} line {}: {}", path.display(), i + 1, e)))?;
        records.push(r);
    }
    Ok(records)
}

/// The label stored beside `path`, or one derived from the file name.
pub fn read_label(path: &Path) -> RunLabel {
    std::fs::read(sidecar(path, "label.json"))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_else(|| RunLabel {
            variant: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            corpus: String::new(),
            stage: String::new(),
        })
}
