use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use super::MetricRecord;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("metric store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("metric store {file}:{line}: {source}")]
    Corrupt { file: PathBuf, line: usize, source: serde_json::Error },
}

/// Append-only metric storage.
pub trait MetricStore: Send + Sync {
    fn append(&self, record: &MetricRecord) -> Result<(), StoreError>;

    /// Consistent copy of everything appended so far.
    fn snapshot(&self) -> Result<Vec<MetricRecord>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    records: Mutex<Vec<MetricRecord>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_records(records: Vec<MetricRecord>) -> Self {
        MemoryStore { records: Mutex::new(records) }
    }
}

impl MetricStore for MemoryStore {
    fn append(&self, record: &MetricRecord) -> Result<(), StoreError> {
        self.records.lock().push(record.clone());
        Ok(())
    }

    fn snapshot(&self) -> Result<Vec<MetricRecord>, StoreError> {
        Ok(self.records.lock().clone())
    }
}

/// JSON Lines files, one per UTC day (`metrics-YYYY-MM-DD.jsonl`).
#[derive(Debug)]
pub struct JsonlStore {
    dir: PathBuf,
    // serializes appends so lines never interleave
    write_lock: Mutex<()>,
    fsync: bool,
}

impl JsonlStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(JsonlStore { dir, write_lock: Mutex::new(()), fsync: true })
    }

    /// Skip `fsync` after each append (tests, bulk loads).
    pub fn without_fsync(mut self) -> Self {
        self.fsync = false;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_for(&self, record: &MetricRecord) -> PathBuf {
        self.dir.join(format!("metrics-{}.jsonl", record.timestamp().format("%Y-%m-%d")))
    }

    /// Read every `metrics-*.jsonl` file under `dir`, oldest day first.
    pub fn read_dir(dir: &Path) -> Result<Vec<MetricRecord>, StoreError> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("metrics-") && n.ends_with(".jsonl"))
            })
            .collect();
        files.sort();
        let mut out = Vec::new();
        for file in files {
            let reader = BufReader::new(fs::File::open(&file)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec = serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                    file: file.clone(),
                    line: i + 1,
                    source,
                })?;
                out.push(rec);
            }
        }
        Ok(out)
    }
}

impl MetricStore for JsonlStore {
    fn append(&self, record: &MetricRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(record).expect("metric records serialize");
        line.push('\n');
        let _guard = self.write_lock.lock();
        let mut f = OpenOptions::new().create(true).append(true).open(self.file_for(record))?;
        f.write_all(line.as_bytes())?;
        if self.fsync {
            f.sync_data()?;
        }
        Ok(())
    }

    fn snapshot(&self) -> Result<Vec<MetricRecord>, StoreError> {
        let _guard = self.write_lock.lock();
        Self::read_dir(&self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Stage, TokenUsage};
    use crate::telemetry::PromptMetric;
    use crate::Money;
    use chrono::{TimeZone, Utc};
    use std::sync::Arc;

    fn prompt(turn: u64, day: u32) -> MetricRecord {
        MetricRecord::Prompt(PromptMetric {
            session_id: "s".into(),
            turn_id: turn,
            stage: Stage::Reduction,
            usage: TokenUsage::new(100, 5),
            latency_ms: 40,
            cost_usd: Money::new(21, 5),
            timestamp: Utc.with_ymd_and_hms(2023, 10, day, 9, 0, 0).unwrap(),
        })
    }

    #[test]
    fn read_back_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = JsonlStore::open(dir.path()).unwrap();
        let recs = [prompt(1, 18), prompt(2, 19)];
        for r in &recs {
            store.append(r).unwrap();
        }
        assert_eq!(store.snapshot().unwrap(), recs);
        assert!(dir.path().join("metrics-2023-10-18.jsonl").exists());
        assert!(dir.path().join("metrics-2023-10-19.jsonl").exists());
    }

    #[test]
    fn concurrent_writers_lose_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(JsonlStore::open(dir.path()).unwrap().without_fsync());
        std::thread::scope(|s| {
            for w in 0..8u64 {
                let store = store.clone();
                s.spawn(move || {
                    for i in 0..125u64 {
                        store.append(&prompt(w * 1000 + i, 18)).unwrap();
                    }
                });
            }
        });
        let all = store.snapshot().unwrap();
        assert_eq!(all.len(), 1000);
        let mut turns: Vec<u64> = all
            .iter()
            .map(|r| match r {
                MetricRecord::Prompt(p) => p.turn_id,
                MetricRecord::Turn(t) => t.turn_id,
            })
            .collect();
        turns.sort();
        turns.dedup();
        assert_eq!(turns.len(), 1000);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("metrics-2023-10-18.jsonl"), "{\"kind\":\"prompt\"}\n").unwrap();
        assert!(matches!(JsonlStore::read_dir(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
