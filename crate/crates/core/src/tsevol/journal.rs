//! Append-only run journal keyed by record index.
//!
//! Each finished record lands as one flushed JSONL line, so a killed run
//! loses at most the line being written. Resume reads the journal back,
//! skips records whose entry carries a matching question hash, and the
//! final output is always rebuilt from journal content in dataset order —
//! which makes interrupted-and-resumed runs byte-identical to clean ones.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EvolveError, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Done,
    /// The record aborted mid-loop (backend exhaustion); whatever was
    /// accepted so far is kept for audit and the record is retried on
    /// resume.
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JournalEntry {
    pub index: usize,
    pub qhash: u64,
    pub status: EntryStatus,
    pub transcript: Option<Transcript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// FNV-1a of the record's question text; detects a dataset swap under a
/// stale journal.
pub fn question_hash(question: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in question.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Read a journal, tolerating a truncated trailing line (the signature of a
/// killed writer). Malformed interior lines are skipped with a warning.
pub fn read_journal(path: &Path) -> Result<Vec<JournalEntry>, EvolveError> {
    let file = File::open(path).map_err(|e| {
        EvolveError::Journal(format!("cannot open journal {}: {e}", path.display()))
    })?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvolveError::Journal(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JournalEntry>(&line) {
            Ok(entry) => entries.push(entry),
            Err(err) => {
                eprintln!(
                    "warning: skipping unreadable journal line {} in {}: {err}",
                    lineno + 1,
                    path.display()
                );
            }
        }
    }
    Ok(entries)
}

/// Serialized single-writer append handle.
pub struct JournalWriter {
    inner: Mutex<BufWriter<File>>,
}

impl JournalWriter {
    /// Open for appending; `truncate` starts a fresh journal.
    pub fn open(path: &Path, truncate: bool) -> Result<Self, EvolveError> {
        let mut options = OpenOptions::new();
        options.create(true).write(true);
        if truncate {
            options.truncate(true);
        } else {
            options.append(true);
        }
        let file = options.open(path).map_err(|e| {
            EvolveError::Journal(format!("cannot open journal {}: {e}", path.display()))
        })?;
        Ok(Self {
            inner: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, entry: &JournalEntry) -> Result<(), EvolveError> {
        let line = serde_json::to_string(entry)
            .map_err(|e| EvolveError::Journal(format!("cannot serialize entry: {e}")))?;
        let mut writer = self.inner.lock().unwrap();
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .and_then(|_| writer.flush())
            .map_err(|e| EvolveError::Journal(format!("journal write failed: {e}")))
    }
}
