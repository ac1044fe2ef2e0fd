//! Per-session JSON Lines journal. Every change to a session appends the
//! full successor state, so the last state line restores the session.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crs_core::dialog::SessionState;
use crs_core::resque::SurveyResponse;
use crs_core::telemetry::{FailureTag, TurnLog};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum JournalEntry {
    Created { state: SessionState },
    Turn { log: Box<TurnLog>, state: SessionState },
    Visibility { state: SessionState },
    Survey { response: SurveyResponse, failure_tags: Vec<FailureTag> },
}

/// A session rebuilt from its journal.
#[derive(Debug, Clone, PartialEq)]
pub struct RestoredSession {
    pub state: SessionState,
    pub logs: Vec<TurnLog>,
    pub surveys: Vec<SurveyResponse>,
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal {file}:{line}: {message}")]
    Corrupt { file: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct Journal {
    dir: PathBuf,
}

impl Journal {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, JournalError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Journal { dir })
    }

    fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn append(&self, session_id: &str, entry: &JournalEntry) -> Result<(), JournalError> {
        let mut line = serde_json::to_string(entry).expect("journal entries serialize");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(session_id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    fn read(path: &Path) -> Result<Option<RestoredSession>, JournalError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut restored: Option<RestoredSession> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| JournalError::Corrupt {
                file: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match entry {
                JournalEntry::Created { state } => {
                    restored = Some(RestoredSession { state, logs: Vec::new(), surveys: Vec::new() })
                }
                JournalEntry::Turn { log, state } => {
                    if let Some(r) = restored.as_mut() {
                        r.logs.push(*log);
                        r.state = state;
                    }
                }
                JournalEntry::Visibility { state } => {
                    if let Some(r) = restored.as_mut() {
                        r.state = state;
                    }
                }
                JournalEntry::Survey { response, .. } => {
                    if let Some(r) = restored.as_mut() {
                        r.surveys.push(response);
                    }
                }
            }
        }
        Ok(restored)
    }

    /// Every session in the journal directory, by id.
    pub fn restore_all(&self) -> Result<BTreeMap<String, RestoredSession>, JournalError> {
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(r) = Self::read(&path)? {
                    out.insert(r.state.session_id.clone(), r);
                }
            }
        }
        Ok(out)
    }
}
