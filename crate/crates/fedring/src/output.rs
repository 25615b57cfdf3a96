//! Run manifests, atomic writes and CSV output.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use fedring_core::engine::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

/// Written before any result file and rewritten when the run ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// Absent for `compare`, which holds one experiment per matrix cell.
    pub experiment: Option<ExperimentConfig>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub wall_clock_secs: Option<f64>,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Result files, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(
        command: &str,
        config: &RunConfig,
        experiment: Option<&ExperimentConfig>,
        outputs: &[&str],
    ) -> Self {
        Self {
            run_id: config.run_id(),
            command: command.to_string(),
            version: crate::VERSION.to_string(),
            config: config.clone(),
            experiment: experiment.cloned(),
            started_at: now(),
            finished_at: None,
            wall_clock_secs: None,
            status: RunStatus::Running,
            error: None,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn finish(&mut self, wall_clock_secs: f64, result: &Result<(), CliError>) {
        self.finished_at = Some(now());
        self.wall_clock_secs = Some(wall_clock_secs);
        match result {
            Ok(()) => self.status = RunStatus::Complete,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join(MANIFEST), self)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        crate::config::read_json(&dir.join(MANIFEST))
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = std::fs::File::create(&tmp).map_err(io)?;
        file.write_all(bytes).map_err(io)?;
        file.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Builds a CSV with LF line endings and a header row.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|s| s.as_ref()))
            .expect("in-memory write");
        Self { writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        self.writer
            .write_record(fields.iter().map(|s| s.as_ref()))
            .expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &self.into_bytes())
    }
}

/// Shortest decimal that round-trips; empty for a missing value.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Reference from a result file back to its manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRef {
    pub manifest: String,
    pub run_id: String,
}

impl ManifestRef {
    pub fn local(run_id: &str) -> Self {
        Self {
            manifest: MANIFEST.to_string(),
            run_id: run_id.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_use_lf_and_a_header() {
        let mut t = Table::new(&["a", "b"]);
        t.row(&["1", "0.5"]);
        t.row(&[String::from("x,y"), fmt_opt(None)]);
        assert_eq!(
            String::from_utf8(t.into_bytes()).unwrap(),
            "a,b\n1,0.5\n\"x,y\",\n"
        );
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_json(&path, &vec![1, 2]).unwrap();
        write_json(&path, &vec![3]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "[\n  3\n]\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
