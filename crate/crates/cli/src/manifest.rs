//! Run manifests and content-addressed output directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Length of the hash prefix used in directory names.
const DIR_HASH_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix: f64,
    pub finished_unix: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    /// Canonical path of the input mesh.
    pub mesh: String,
    pub mesh_checksum: String,
    pub config: RunConfig,
    /// Directory name, relative to the output root.
    pub output_dir: String,
    /// Input files by role, with their sha256.
    pub inputs: BTreeMap<String, String>,
    /// Content checksums: `field`, `schedule`, `path` where applicable.
    pub checksums: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
    /// Omitted in deterministic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// `<root>/<prefix>-<hash of key>`, created if missing.
pub fn output_dir(root: &Path, prefix: &str, key: &impl Serialize) -> CliResult<(PathBuf, String)> {
    let key = serde_json::to_vec(key)?;
    let name = format!("{prefix}-{}", &sha256_hex(&key)[..DIR_HASH_LEN]);
    let dir = root.join(&name);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok((dir, name))
}

/// Collects the files written into one output directory.
pub struct Writer {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            artifacts: Vec::new(),
        }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn bytes(&mut self, file: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(file);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push(Artifact {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn json(&mut self, file: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(file, text.as_bytes())
    }

    pub fn with(&mut self, file: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::internal(format!("{file}: {e}")))?;
        self.bytes(file, &buf)
    }

    /// Writes `manifest.json` listing every artifact written so far.
    pub fn finish(self, mut manifest: RunManifest) -> CliResult<PathBuf> {
        manifest.artifacts = self.artifacts;
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    /// The manifest next to `file`.
    pub fn beside(file: &Path) -> CliResult<(Self, PathBuf)> {
        let dir = file.parent().unwrap_or(Path::new("."));
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(CliError::input(format!(
                "{} has no {MANIFEST} next to it",
                file.display()
            )));
        }
        Ok((Self::read(&path)?, dir.to_path_buf()))
    }

    pub fn artifact(&self, file: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.file == file)
    }

    /// Fails unless `path` hashes to the value recorded for its file name.
    pub fn verify(&self, path: &Path) -> CliResult<String> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let recorded = self
            .artifact(name)
            .ok_or_else(|| CliError::input(format!("{name} is not listed in its manifest")))?;
        let actual = file_sha256(path)?;
        if actual != recorded.sha256 {
            return Err(CliError::checksum(format!(
                "{} has sha256 {actual}, manifest records {}",
                path.display(),
                recorded.sha256
            )));
        }
        Ok(actual)
    }
}
