//! Per-sample judge-score history backing the progressive answer reward.
//!
//! Each sample keeps only its most recent scored group. When a log file is
//! attached, every update is appended as one JSON line before it becomes
//! visible, and the file is replayed on open, so history survives restarts.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("iteration {got} for sample {sample_id:?} does not follow stored iteration {stored}")]
    NonMonotone {
        sample_id: String,
        stored: u64,
        got: u64,
    },
    #[error("judge score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("history file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("history file {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub scores: Vec<f64>,
}

impl HistoryEntry {
    pub fn mean(&self) -> Option<f64> {
        (!self.scores.is_empty())
            .then(|| self.scores.iter().sum::<f64>() / self.scores.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    sample_id: String,
    iteration: u64,
    scores: Vec<f64>,
}

struct Log {
    path: PathBuf,
    file: File,
}

#[derive(Default)]
pub struct JudgeHistory {
    entries: RwLock<HashMap<String, HistoryEntry>>,
    log: Option<Mutex<Log>>,
}

impl JudgeHistory {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays `path` (if it exists) and appends future updates to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, HistoryError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| HistoryError::Io {
            path: path.clone(),
            source,
        };
        let mut entries: HashMap<String, HistoryEntry> = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: LogLine =
                    serde_json::from_str(&line).map_err(|e| HistoryError::Corrupt {
                        path: path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                let newer = entries
                    .get(&rec.sample_id)
                    .is_none_or(|e| rec.iteration > e.iteration);
                if newer {
                    entries.insert(
                        rec.sample_id,
                        HistoryEntry {
                            iteration: rec.iteration,
                            scores: rec.scores,
                        },
                    );
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(JudgeHistory {
            entries: RwLock::new(entries),
            log: Some(Mutex::new(Log { path, file })),
        })
    }

    pub fn read(&self, sample_id: &str) -> Option<HistoryEntry> {
        self.entries.read().get(sample_id).cloned()
    }

    /// Mean judge score of the stored group for `sample_id`.
    pub fn prior_mean(&self, sample_id: &str) -> Option<f64> {
        self.entries
            .read()
            .get(sample_id)
            .and_then(HistoryEntry::mean)
    }

    /// Fails when `iteration` would not advance the stored one.
    pub fn check_iteration(&self, sample_id: &str, iteration: u64) -> Result<(), HistoryError> {
        match self.entries.read().get(sample_id) {
            Some(e) if iteration <= e.iteration => Err(HistoryError::NonMonotone {
                sample_id: sample_id.to_owned(),
                stored: e.iteration,
                got: iteration,
            }),
            _ => Ok(()),
        }
    }

    /// Replaces the stored group for `sample_id`. The iteration must be
    /// strictly greater than the stored one.
    pub fn update(
        &self,
        sample_id: &str,
        iteration: u64,
        scores: Vec<f64>,
    ) -> Result<(), HistoryError> {
        if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(HistoryError::InvalidScore(s));
        }
        let mut entries = self.entries.write();
        if let Some(e) = entries.get(sample_id) {
            if iteration <= e.iteration {
                return Err(HistoryError::NonMonotone {
                    sample_id: sample_id.to_owned(),
                    stored: e.iteration,
                    got: iteration,
                });
            }
        }
        if let Some(log) = &self.log {
            let mut log = log.lock();
            let mut line = serde_json::to_string(&LogLine {
                sample_id: sample_id.to_owned(),
                iteration,
                scores: scores.clone(),
            })
            .expect("history line serializes");
            line.push('\n');
            let Log { path, file } = &mut *log;
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| HistoryError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        entries.insert(sample_id.to_owned(), HistoryEntry { iteration, scores });
        Ok(())
    }
}
