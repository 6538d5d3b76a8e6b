use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub sample_id: String,
    pub request_digest: String,
    pub response: String,
    pub latency_ms: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demo_ids: Vec<String>,
}

/// Append-only record of final provider responses. Appends are serialized.
#[derive(Debug, Default)]
pub struct Transcript {
    records: Mutex<Vec<TranscriptRecord>>,
}

impl Transcript {
    pub fn append(&self, record: TranscriptRecord) {
        self.records.lock().expect("transcript poisoned").push(record);
    }

    /// Records sorted by sample id, then digest.
    pub fn records(&self) -> Vec<TranscriptRecord> {
        let mut out = self.records.lock().expect("transcript poisoned").clone();
        out.sort_by(|a, b| (&a.sample_id, &a.request_digest).cmp(&(&b.sample_id, &b.request_digest)));
        out
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("transcript poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vec<TranscriptRecord>> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() }))
            .collect()
    }
}
