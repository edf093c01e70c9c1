//! Run manifest: file inventory with byte lengths and an append-only stage log.

use crate::artifacts::{read_json, write_json};
use crate::error::CliResult;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// Schema version of manifests and checkpoints.
pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Started,
    Completed,
    Failed,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: String,
    pub status: StageStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub files: Vec<FileEntry>,
    pub stages: Vec<StageEvent>,
}

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            config_hash: config_hash.into(),
            created,
            files: vec![],
            stages: vec![],
        }
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Appends a stage event; earlier events are never modified.
    pub fn log(&mut self, stage: &str, status: StageStatus, detail: impl Into<String>) {
        self.stages.push(StageEvent { stage: stage.into(), status, detail: detail.into() });
    }

    /// Latest status recorded for `stage`.
    pub fn status(&self, stage: &str) -> Option<StageStatus> {
        self.stages.iter().rev().find(|e| e.stage == stage).map(|e| e.status)
    }

    /// Records (or refreshes) the byte length of a file inside `dir`.
    pub fn record_file(&mut self, dir: &Path, relative: &str) -> CliResult<()> {
        let bytes = fs::metadata(dir.join(relative))?.len();
        match self.files.iter_mut().find(|f| f.path == relative) {
            Some(entry) => entry.bytes = bytes,
            None => self.files.push(FileEntry { path: relative.into(), bytes }),
        }
        Ok(())
    }

    /// Inventory entries whose file is missing or whose length differs from the record.
    pub fn integrity_problems(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|f| match fs::metadata(dir.join(&f.path)) {
                Err(_) => Some(format!("{}: missing", f.path)),
                Ok(m) if m.len() != f.bytes => {
                    Some(format!("{}: {} bytes, manifest records {}", f.path, m.len(), f.bytes))
                }
                Ok(_) => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_log_keeps_history_and_reports_latest() {
        let mut m = RunManifest::new("abc");
        m.log("flow", StageStatus::Started, "");
        m.log("flow", StageStatus::Interrupted, "stopped");
        m.log("flow", StageStatus::Completed, "");
        assert_eq!(m.status("flow"), Some(StageStatus::Completed));
        assert_eq!(m.stages.len(), 3);
        assert_eq!(m.status("limit"), None);
    }

    #[test]
    fn integrity_check_detects_length_changes() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "t\n1\n").unwrap();
        let mut m = RunManifest::new("abc");
        m.record_file(dir.path(), "a.csv").unwrap();
        assert!(m.integrity_problems(dir.path()).is_empty());
        std::fs::write(dir.path().join("a.csv"), "t\n10\n").unwrap();
        assert_eq!(m.integrity_problems(dir.path()).len(), 1);
        std::fs::remove_file(dir.path().join("a.csv")).unwrap();
        assert!(m.integrity_problems(dir.path())[0].contains("missing"));
    }
}
