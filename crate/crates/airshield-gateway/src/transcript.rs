//! Append-only per-record transcript store.
//!
//! Entries are keyed by (run_id, record_index); interrupted runs resume by
//! skipping keys already present. Line order in the file is not significant.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub run_id: String,
    pub record_index: usize,
    pub prompt_kind: String,
    pub input: String,
    pub response: Option<String>,
    pub status: String,
    pub latency_ms: u64,
}

pub struct TranscriptStore {
    path: PathBuf,
    entries: Mutex<HashMap<(String, usize), TranscriptEntry>>,
    writer: Mutex<BufWriter<File>>,
}

impl TranscriptStore {
    /// Opens (or creates) the store, loading any completed entries.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: TranscriptEntry =
                    serde_json::from_str(&line).map_err(|e| GatewayError::BadTranscript {
                        line: i + 1,
                        msg: e.to_string(),
                    })?;
                entries.insert((entry.run_id.clone(), entry.record_index), entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, run_id: &str, record_index: usize) -> Option<TranscriptEntry> {
        self.entries
            .lock()
            .expect("transcript index poisoned")
            .get(&(run_id.to_string(), record_index))
            .cloned()
    }

    pub fn completed_count(&self, run_id: &str) -> usize {
        self.entries
            .lock()
            .expect("transcript index poisoned")
            .keys()
            .filter(|(r, _)| r == run_id)
            .count()
    }

    /// Appends one entry; safe to call from worker threads.
    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let line = serde_json::to_string(entry).expect("transcript entry serializes");
        {
            let mut w = self.writer.lock().expect("transcript writer poisoned");
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        self.entries
            .lock()
            .expect("transcript index poisoned")
            .insert((entry.run_id.clone(), entry.record_index), entry.clone());
        Ok(())
    }
}
