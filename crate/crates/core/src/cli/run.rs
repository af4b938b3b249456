//! Append-only run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, Config};
use crate::error::{Error, Result};

/// A fresh output directory. Creation fails if the directory already holds
/// anything, so earlier results are never overwritten.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    artifacts: Vec<PathBuf>,
    datasets: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if entries.next().is_some() {
                return Err(Error::Input(format!(
                    "output directory {} is not empty; runs need a fresh directory",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            datasets: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of a new artifact, registered for the manifest. Parent
    /// directories are created.
    pub fn artifact(&mut self, relative: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.artifacts.push(path.clone());
        Ok(path)
    }

    pub fn write_artifact(&mut self, relative: impl AsRef<Path>, contents: &str) -> Result<PathBuf> {
        let path = self.artifact(relative)?;
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Records an input file whose checksum goes into the manifest.
    pub fn input(&mut self, path: &Path) {
        if !self.datasets.iter().any(|p| p == path) {
            self.datasets.push(path.to_path_buf());
        }
    }

    /// Writes `manifest.json` listing every registered file that exists.
    pub fn finish(self, command: &str, config: &Config, seed: u64, started: f64) -> Result<()> {
        let mut artifacts = Vec::new();
        for p in &self.artifacts {
            if p.exists() {
                let rel = p.strip_prefix(&self.root).unwrap_or(p);
                artifacts.push(FileDigest {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(p)?,
                });
            }
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        artifacts.dedup_by(|a, b| a.path == b.path);
        let mut datasets = Vec::new();
        for p in &self.datasets {
            datasets.push(FileDigest {
                path: p.to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serialises"),
            config_hash: config.hash(),
            seed,
            build: build_id(),
            started_unix: started,
            finished_unix: now(),
            artifacts,
            datasets,
        };
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: the resolved config, the seed,
/// the build, and checksums of inputs and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub build: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Paths relative to the run directory.
    pub artifacts: Vec<FileDigest>,
    pub datasets: Vec<FileDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn build_id() -> String {
    match option_env!("ANNOTMIX_BUILD_ID") {
        Some(id) => format!("annotmix {} ({id})", env!("CARGO_PKG_VERSION")),
        None => format!("annotmix {}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
