//! Run manifests: what was run, how long it took, and a checksum for every
//! file written.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::error::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: String,
    pub overrides: Vec<String>,
    pub workers: usize,
    pub wall_seconds: f64,
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    /// Set when `H` lies outside the range covered by the regularity theorem.
    pub outside_theorem: bool,
    pub files: Vec<FileEntry>,
    /// Set when a worker failed before all paths completed.
    pub partial: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex(&Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Collects files and timings for one command invocation.
pub struct Recorder {
    dir: PathBuf,
    start: Instant,
    stage_start: Instant,
    pub manifest: RunManifest,
}

impl Recorder {
    pub fn new(dir: &Path, command: &str, config: Option<&ExperimentConfig>, overrides: &[String], workers: usize) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let now = Instant::now();
        let mut manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: String::new(),
            config: String::new(),
            overrides: overrides.to_vec(),
            workers,
            wall_seconds: 0.0,
            stages: Vec::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
            outside_theorem: false,
            files: Vec::new(),
            partial: None,
        };
        if let Some(c) = config {
            manifest.config_hash = c.hash();
            manifest.config = c.to_toml();
            manifest.outside_theorem = !(c.noise.hurst > 0.25 && c.noise.hurst < 0.5);
            manifest.notes.push(format!("initial data: {}", c.kernels.init.describe()));
            if manifest.outside_theorem {
                manifest
                    .warnings
                    .push(format!("H = {} is outside the theorem hypothesis 1/4 < H < 1/2", c.noise.hurst));
            }
        }
        for o in overrides {
            manifest.warnings.push(format!("override: {o}"));
        }
        Ok(Self { dir: dir.to_path_buf(), start: now, stage_start: now, manifest })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Close the current stage.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.stages.push(Stage { name: name.into(), seconds: (now - self.stage_start).as_secs_f64() });
        self.stage_start = now;
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.manifest.warnings.push(w.into());
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.manifest.notes.push(n.into());
    }

    /// Register a file already written under the output directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let (sha256, bytes) = sha256_file(&self.path(name))?;
        self.manifest.files.retain(|f| f.name != name);
        self.manifest.files.push(FileEntry { name: name.into(), sha256, bytes });
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        self.write_text(name, &text)
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.wall_seconds = self.start.elapsed().as_secs_f64();
        let p = self.path(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self.manifest).expect("serializable") + "\n";
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let p = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format { path: p, message: e.to_string() })
}

/// Files whose current checksum differs from the manifest (or are missing).
pub fn verify_checksums(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter(|f| sha256_file(&dir.join(&f.name)).map_or(true, |(s, n)| s != f.sha256 || n != f.bytes))
        .map(|f| f.name.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_verifies_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let mut r = Recorder::new(dir.path(), "test", Some(&cfg), &["run.seed=3".into()], 2).unwrap();
        r.write_text("a.txt", "hello\n").unwrap();
        r.stage("write");
        let m = r.finish().unwrap();
        assert_eq!(m.files[0].sha256, "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03");
        assert_eq!(m.warnings, vec!["override: run.seed=3".to_string()]);
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(verify_checksums(dir.path(), &back).is_empty());
        std::fs::write(dir.path().join("a.txt"), "changed\n").unwrap();
        assert_eq!(verify_checksums(dir.path(), &back), vec!["a.txt".to_string()]);
    }

    #[test]
    fn flags_hurst_outside_theorem() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.noise.hurst = 0.2;
        let r = Recorder::new(dir.path(), "test", Some(&cfg), &[], 1).unwrap();
        assert!(r.manifest.outside_theorem);
        assert!(r.manifest.warnings[0].contains("outside the theorem hypothesis"));
    }
}
