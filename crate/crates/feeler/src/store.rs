//! On-disk layout of one experiment.
//!
//! ```text
//! space.json  config.json  oracle.json?
//! plans.json             RoundPlan per round index
//! labels.json            labeled solutions per round index
//! split.json             train/validation/test ids of the final round
//! ratings/round-<l>.csv  raw ratings behind labels.json
//! stage1_model.json
//! candidates.json  comparisons.json  stage2_model.json
//! reports/
//! live/                  answers collected by the labeling service
//! ```
//!
//! Every file is replaced by writing a sibling temp file and renaming it, so
//! a crash leaves either the old or the new version. `labels.json` is the
//! commit point of a round: a plan or model written for a round whose labels
//! never landed is recomputed identically on rerun.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::PipelineError;

pub const SPACE: &str = "space.json";
pub const CONFIG: &str = "config.json";
pub const ORACLE: &str = "oracle.json";
pub const PLANS: &str = "plans.json";
pub const LABELS: &str = "labels.json";
pub const SPLIT: &str = "split.json";
pub const STAGE1: &str = "stage1_model.json";
pub const CANDIDATES: &str = "candidates.json";
pub const COMPARISONS: &str = "comparisons.json";
pub const STAGE2: &str = "stage2_model.json";
pub const REPORTS: &str = "reports";
pub const LIVE: &str = "live";
const LOCK: &str = ".lock";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens an existing experiment directory.
    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        if !root.join(CONFIG).is_file() || !root.join(SPACE).is_file() {
            return Err(PipelineError::NotAnExperiment(root.to_path_buf()));
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    /// Creates the directory, which must be absent or empty.
    pub fn create(root: &Path) -> Result<Self, PipelineError> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(|e| PipelineError::io(root, e))?;
            if entries.next().is_some() {
                return Err(PipelineError::NotEmpty(root.to_path_buf()));
            }
        }
        fs::create_dir_all(root).map_err(|e| PipelineError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn ratings_path(&self, round: usize) -> PathBuf {
        self.root.join("ratings").join(format!("round-{round}.csv"))
    }

    pub fn live_ratings_path(&self, round: usize) -> PathBuf {
        self.root.join(LIVE).join(format!("round-{round}.csv"))
    }

    pub fn live_votes_path(&self) -> PathBuf {
        self.root.join(LIVE).join("votes.json")
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.root.join(REPORTS).join(name)
    }

    pub fn lock(&self) -> Result<LockGuard, PipelineError> {
        LockGuard::acquire(&self.path(LOCK))
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, PipelineError> {
        read_json(&self.path(name))
    }

    /// `None` when the file does not exist.
    pub fn read_json_opt<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>, PipelineError> {
        let path = self.path(name);
        if path.exists() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), PipelineError> {
        write_json(&self.path(name), value)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::artifact(path, e.to_string()))
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::artifact(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    f.sync_all().map_err(|e| PipelineError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Exclusive writer lock; released on drop.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(path: &Path) -> Result<Self, PipelineError> {
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self {
                    path: path.to_path_buf(),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path.to_path_buf())),
            Err(e) => Err(PipelineError::io(path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
