//! Content-addressed stage directories `<out>/<config-hash>/<stage>[/<experiment>]`
//! with hashed manifests and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Length of the config-hash prefix used as the run directory name.
const HASH_DIR_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Data,
    Sample,
    Learn,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Sample => "sample",
            Stage::Learn => "learn",
            Stage::Report => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the stage directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub experiment: Option<String>,
    pub config_hash: String,
    pub config: Config,
    pub artifacts: Vec<ArtifactEntry>,
    /// SHA-256 of each upstream manifest this stage read.
    pub upstream: Vec<ArtifactEntry>,
    pub wall_clock_s: f64,
}

impl Manifest {
    pub fn artifact(&self, name: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Paths of one run, keyed by the config hash.
#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
    pub config_hash: String,
}

impl RunLayout {
    pub fn new(out: &Path, config_hash: &str) -> Self {
        Self {
            root: out.join(&config_hash[..HASH_DIR_LEN.min(config_hash.len())]),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn stage_dir(&self, stage: Stage, experiment: Option<&str>) -> PathBuf {
        let dir = self.root.join(stage.name());
        match experiment {
            Some(e) => dir.join(e),
            None => dir,
        }
    }
}

/// Collects the outputs of one stage and seals them with a manifest.
pub struct StageWriter {
    dir: PathBuf,
    stage: Stage,
    experiment: Option<String>,
    config: Config,
    config_hash: String,
    artifacts: Vec<ArtifactEntry>,
    upstream: Vec<ArtifactEntry>,
    started: Instant,
}

impl StageWriter {
    /// Opens the stage directory and removes any previous manifest, so an
    /// interrupted rerun never leaves a manifest describing stale files.
    pub fn begin(layout: &RunLayout, stage: Stage, experiment: Option<&str>, config: &Config) -> CliResult<Self> {
        let dir = layout.stage_dir(stage, experiment);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let manifest = dir.join(MANIFEST);
        if manifest.exists() {
            std::fs::remove_file(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        }
        Ok(Self {
            dir,
            stage,
            experiment: experiment.map(str::to_string),
            config: config.clone(),
            config_hash: layout.config_hash.clone(),
            artifacts: Vec::new(),
            upstream: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_upstream(&mut self, upstream: &Upstream) {
        self.upstream.push(ArtifactEntry {
            path: upstream.dir.join(MANIFEST).display().to_string(),
            sha256: upstream.manifest_sha256.clone(),
            bytes: upstream.manifest_bytes,
        });
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(ArtifactEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self) -> CliResult<Manifest> {
        let manifest = Manifest {
            stage: self.stage,
            experiment: self.experiment,
            config_hash: self.config_hash,
            config: self.config,
            artifacts: self.artifacts,
            upstream: self.upstream,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(MANIFEST), &bytes)?;
        Ok(manifest)
    }
}

/// A verified upstream stage.
pub struct Upstream {
    pub dir: PathBuf,
    pub manifest: Manifest,
    manifest_sha256: String,
    manifest_bytes: u64,
}

impl Upstream {
    /// Load and check the manifest of `stage`: it must exist, carry the
    /// expected config hash and every listed artifact must match its hash.
    pub fn open(layout: &RunLayout, stage: Stage, experiment: Option<&str>) -> CliResult<Self> {
        let dir = layout.stage_dir(stage, experiment);
        let path = dir.join(MANIFEST);
        let bytes = std::fs::read(&path).map_err(|_| {
            CliError::artifact(&path, format!("the `{}` stage has not been run for this configuration", stage.name()))
        })?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| CliError::artifact(&path, format!("unreadable manifest: {e}")))?;
        if manifest.config_hash != layout.config_hash {
            return Err(CliError::artifact(
                &path,
                format!(
                    "produced under config hash {} but the current config hashes to {}; refusing to mix runs",
                    manifest.config_hash, layout.config_hash
                ),
            ));
        }
        if manifest.stage != stage || manifest.experiment.as_deref() != experiment {
            return Err(CliError::artifact(&path, "manifest describes a different stage"));
        }
        for a in &manifest.artifacts {
            let p = dir.join(&a.path);
            let content = std::fs::read(&p).map_err(|_| CliError::artifact(&p, "listed in manifest but missing"))?;
            if sha256_hex(&content) != a.sha256 {
                return Err(CliError::artifact(&p, "content hash does not match the manifest"));
            }
        }
        Ok(Self {
            dir,
            manifest,
            manifest_sha256: sha256_hex(&bytes),
            manifest_bytes: bytes.len() as u64,
        })
    }

    pub fn path(&self, name: &str) -> CliResult<PathBuf> {
        if self.manifest.artifact(name).is_none() {
            return Err(CliError::artifact(self.dir.join(name), "not listed in the stage manifest"));
        }
        Ok(self.dir.join(name))
    }

    pub fn read(&self, name: &str) -> CliResult<Vec<u8>> {
        let path = self.path(name)?;
        std::fs::read(&path).map_err(|e| CliError::io(&path, e))
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> CliResult<T> {
        let bytes = self.read(name)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::artifact(self.dir.join(name), format!("unreadable JSON: {e}")))
    }
}
