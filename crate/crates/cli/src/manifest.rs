use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use graphfm::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::memory::MemorySampler;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
    /// Structure hash of the graph read from this input, when it is a graph.
    pub graph_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Command-line arguments without the program name and without `--out`.
    pub args: Vec<String>,
    pub cwd: PathBuf,
    pub out: PathBuf,
    pub config: serde_json::Value,
    pub git_describe: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputRecord>,
    /// Output files relative to `out` with their sha256.
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub wall_seconds: Option<f64>,
    pub peak_rss_mib: Option<f64>,
    pub status: RunStatus,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let m = serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| Error::FileFormat {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(m)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Arguments of this process with `--out` removed.
pub fn recorded_args() -> Vec<String> {
    let mut out = Vec::new();
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--out" {
            args.next();
        } else if !a.starts_with("--out=") {
            out.push(a);
        }
    }
    out
}

/// sha256 of a file, or of every file under a directory (sorted by relative path).
pub fn hash_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        for (rel, digest) in hash_tree(path, &[])? {
            h.update(rel.as_bytes());
            h.update([0]);
            h.update(digest.as_bytes());
            h.update([0]);
        }
    } else {
        h.update(std::fs::read(path)?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Every file below `root` mapped to its sha256, skipping names in `exclude`.
pub fn hash_tree(root: &Path, exclude: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .to_string_lossy()
            .replace('\\', "/");
        let name = entry.file_name().to_string_lossy();
        if exclude.iter().any(|x| *x == name || rel == *x) || name.ends_with(".tmp") {
            continue;
        }
        out.insert(rel, hex::encode(Sha256::digest(std::fs::read(entry.path())?)));
    }
    Ok(out)
}

/// A manifest being kept up to date for the duration of one command.
pub struct Run {
    pub manifest: RunManifest,
    dir: PathBuf,
    clock: Instant,
    memory: MemorySampler,
    exclude: Vec<&'static str>,
}

impl Run {
    /// Writes the initial manifest into `out` before any work starts.
    pub fn start(
        command: &str,
        out: &Path,
        config: serde_json::Value,
        seeds: BTreeMap<String, u64>,
        inputs: Vec<InputRecord>,
    ) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: recorded_args(),
            cwd: std::env::current_dir()?,
            out: std::path::absolute(out).unwrap_or_else(|_| out.to_path_buf()),
            config,
            git_describe: git_describe(),
            seeds,
            inputs,
            outputs: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            wall_seconds: None,
            peak_rss_mib: None,
            status: RunStatus::Running,
            error: None,
        };
        manifest.write(out)?;
        Ok(Self {
            manifest,
            dir: out.to_path_buf(),
            clock: Instant::now(),
            memory: MemorySampler::start(),
            exclude: vec![MANIFEST_FILE],
        })
    }

    /// Output files or directories (relative to `out`) left out of the output hashes.
    pub fn exclude_outputs(&mut self, names: &[&'static str]) {
        self.exclude.extend_from_slice(names);
    }

    /// Records the outcome, output hashes and resource use.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        self.manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.manifest.wall_seconds = Some(self.clock.elapsed().as_secs_f64());
        self.manifest.peak_rss_mib = self.memory.peak_mib();
        match &result {
            Ok(_) => self.manifest.status = RunStatus::Ok,
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(e.to_string());
            }
        }
        self.manifest.outputs = hash_tree(&self.dir, &self.exclude).unwrap_or_default();
        self.manifest.write(&self.dir)?;
        result
    }
}
