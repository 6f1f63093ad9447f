//! On-disk layout of experiment output.
//!
//! A run directory holds one JSONL file per run (header line followed by one
//! PeriodRecord object per line), a `snapshots/<run-id>/` sidecar directory
//! with one JSON file per period, and a `manifest.json` for grids. All files
//! are UTF-8.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{GridManifest, OrchestratorError, PeriodRecord, RunHeader, RunLog, RunSnapshot};

/// Paths inside one output directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn log_path(&self, run_id: &str) -> PathBuf {
        self.root.join(format!("{run_id}.jsonl"))
    }

    pub fn snapshot_path(&self, run_id: &str, period: usize) -> PathBuf {
        self.root
            .join("snapshots")
            .join(run_id)
            .join(format!("period_{period:04}.json"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn log_paths(&self) -> Result<Vec<PathBuf>, OrchestratorError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        paths.sort();
        Ok(paths)
    }
}

/// Write one run: the JSONL log plus one snapshot file per period.
pub fn write_run_log(dir: &RunDir, log: &RunLog) -> Result<PathBuf, OrchestratorError> {
    fs::create_dir_all(&dir.root)?;
    let path = dir.log_path(&log.header.run_id);
    let mut file = fs::File::create(&path)?;
    let mut header = serde_json::to_value(&log.header)?;
    if let Some(aborted) = &log.aborted {
        header["aborted"] = serde_json::Value::String(aborted.clone());
    }
    writeln!(file, "{header}")?;
    for record in &log.records {
        writeln!(file, "{}", serde_json::to_string(record)?)?;
    }
    for snapshot in &log.snapshots {
        let sp = dir.snapshot_path(&log.header.run_id, snapshot.period);
        fs::create_dir_all(sp.parent().expect("snapshot path has a parent"))?;
        fs::write(&sp, serde_json::to_string(snapshot)?)?;
    }
    Ok(path)
}

/// Read a run log (header + records). Snapshots are loaded separately on
/// demand via [`load_snapshot`].
pub fn load_run_log(path: &Path) -> Result<RunLog, OrchestratorError> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| OrchestratorError::Integrity(format!("{}: empty log", path.display())))??;
    let header_value: serde_json::Value = serde_json::from_str(&header_line)?;
    let aborted = header_value
        .get("aborted")
        .and_then(|v| v.as_str())
        .map(ToString::to_string);
    let header: RunHeader = serde_json::from_value(header_value)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PeriodRecord = serde_json::from_str(&line)?;
        records.push(record);
    }
    Ok(RunLog {
        header,
        records,
        snapshots: vec![],
        aborted,
    })
}

pub fn load_snapshot(
    dir: &RunDir,
    run_id: &str,
    period: usize,
) -> Result<RunSnapshot, OrchestratorError> {
    let path = dir.snapshot_path(run_id, period);
    let text = fs::read_to_string(&path).map_err(|e| {
        OrchestratorError::Integrity(format!("missing snapshot {}: {e}", path.display()))
    })?;
    let snapshot: RunSnapshot = serde_json::from_str(&text)?;
    if snapshot.run_id != run_id || snapshot.period != period {
        return Err(OrchestratorError::Integrity(format!(
            "snapshot {} does not match its key",
            path.display()
        )));
    }
    Ok(snapshot)
}

pub fn write_manifest(dir: &RunDir, manifest: &GridManifest) -> Result<(), OrchestratorError> {
    fs::create_dir_all(&dir.root)?;
    fs::write(dir.manifest_path(), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn load_manifest(dir: &RunDir) -> Result<GridManifest, OrchestratorError> {
    let text = fs::read_to_string(dir.manifest_path())?;
    Ok(serde_json::from_str(&text)?)
}
