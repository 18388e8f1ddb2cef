//! Append-only transcript store: one JSON record per line, keyed by the
//! request cache key, enabling deterministic replay.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub cache_key: String,
    pub model: String,
    pub prompt: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub timestamp: u64,
}

/// JSONL-backed store. Loading tolerates a missing file (empty store);
/// appends are serialized.
#[derive(Debug)]
pub struct TranscriptStore {
    path: PathBuf,
    records: Mutex<HashMap<String, TranscriptRecord>>,
}

impl TranscriptStore {
    pub fn load(path: impl AsRef<Path>) -> Result<TranscriptStore, LlmError> {
        let path = path.as_ref().to_path_buf();
        let mut records = HashMap::new();
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: TranscriptRecord = serde_json::from_str(line).map_err(|e| {
                        LlmError::Backend(format!(
                            "transcript {} line {}: {e}",
                            path.display(),
                            i + 1
                        ))
                    })?;
                    // Later records supersede earlier ones for the same key.
                    records.insert(rec.cache_key.clone(), rec);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(LlmError::Io(e.to_string())),
        }
        Ok(TranscriptStore {
            path,
            records: Mutex::new(records),
        })
    }

    pub fn get(&self, cache_key: &str) -> Option<TranscriptRecord> {
        self.records.lock().unwrap().get(cache_key).cloned()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.lock().unwrap().is_empty()
    }

    pub fn append(&self, record: TranscriptRecord) -> Result<(), LlmError> {
        let line = serde_json::to_string(&record)
            .map_err(|e| LlmError::Backend(format!("serialize transcript record: {e}")))?;
        {
            if let Some(parent) = self.path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| LlmError::Io(e.to_string()))?;
                }
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| LlmError::Io(e.to_string()))?;
            file.write_all(line.as_bytes())
                .and_then(|_| file.write_all(b"\n"))
                .map_err(|e| LlmError::Io(e.to_string()))?;
        }
        self.records
            .lock()
            .unwrap()
            .insert(record.cache_key.clone(), record);
        Ok(())
    }
}
