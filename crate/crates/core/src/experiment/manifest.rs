//! Run bookkeeping: which cells exist, which are done, and where their
//! artifacts live (paths relative to the run directory).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub key: String,
    pub strategy: String,
    pub pool_size: usize,
    pub trial: usize,
    pub seed: u64,
    pub status: CellStatus,
    pub result: String,
    pub pool: String,
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub config_path: Option<PathBuf>,
    pub code_version: String,
    pub provider_tags: BTreeMap<String, String>,
    pub max_pool_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Non-default choices worth surfacing next to results.
    pub notes: Vec<String>,
    pub cells: Vec<CellEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Resume(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        write_atomic(&run_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Done only when the status says so and the result and transcript files exist.
    pub fn is_done(&self, run_dir: &Path, cell: &CellEntry) -> bool {
        cell.status == CellStatus::Done
            && run_dir.join(&cell.result).is_file()
            && run_dir.join(&cell.transcript).is_file()
    }

    pub fn cell_mut(&mut self, key: &str) -> Option<&mut CellEntry> {
        self.cells.iter_mut().find(|c| c.key == key)
    }

    pub fn failed(&self) -> Vec<&CellEntry> {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).collect()
    }
}

/// Writes via a sibling temp file so a killed run never leaves a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
