//! Run manifests and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything needed to re-run a command: the exact argument vector, the
/// fully resolved configuration, and checksums of every input it read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Input path → SHA-256 (hex).
    pub inputs: BTreeMap<String, String>,
    /// Artifact role → path.
    pub artifacts: BTreeMap<String, String>,
    /// Artifact path → SHA-256 (hex), taken after writing.
    pub artifact_sha256: BTreeMap<String, String>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: BTreeMap::new(),
            seed: None,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            artifact_sha256: BTreeMap::new(),
            duration_secs: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn artifact(&mut self, role: &str, path: &Path) -> Result<()> {
        let key = path.display().to_string();
        self.artifact_sha256.insert(key.clone(), sha256_file(path)?);
        self.artifacts.insert(role.to_string(), key);
        Ok(())
    }

    pub fn finish(mut self, elapsed: Duration, path: &Path) -> Result<()> {
        self.duration_secs = elapsed.as_secs_f64();
        let mut json = serde_json::to_string_pretty(&self)?;
        json.push('\n');
        write_atomic(path, json.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .with_context(|| format!("not a file path: {}", path.display()))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// `<path>.<suffix>`, keeping the original extension in the name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
