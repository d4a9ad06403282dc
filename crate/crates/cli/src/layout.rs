//! Where each artifact lives under the work directory, and how CSV
//! artifacts carry the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use hearsay_core::crawler::INVENTORY_FILE;
use hearsay_core::dataset::{DatasetId, Split};
use hearsay_core::evaluator::GtMode;

use crate::error::{CliError, Result};

pub const HASH_PREFIX: &str = "# config_hash=";

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(work_dir: &Path) -> Self {
        Self {
            root: work_dir.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn splits(&self, d: DatasetId) -> PathBuf {
        self.root.join("splits").join(format!("{d}.csv"))
    }

    pub fn features(&self, d: DatasetId, split: Split) -> PathBuf {
        self.root.join("features").join(format!("{d}.{}.f32", split.as_str()))
    }

    pub fn norm_stats(&self, d: DatasetId) -> PathBuf {
        self.root.join("features").join(format!("{d}.norm.json"))
    }

    pub fn model(&self, d: DatasetId) -> PathBuf {
        self.root.join("models").join(format!("{d}.model"))
    }

    pub fn train_log(&self, d: DatasetId) -> PathBuf {
        self.root.join("models").join(format!("{d}.train_log.csv"))
    }

    /// Root of the crawled audio store.
    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn inventory(&self) -> PathBuf {
        self.corpus().join(INVENTORY_FILE)
    }

    pub fn predictions(&self, d: DatasetId) -> PathBuf {
        self.root.join("predictions").join(format!("{d}.csv"))
    }

    pub fn rankings(&self, d: DatasetId) -> PathBuf {
        self.root.join("rankings").join(format!("{d}.csv"))
    }

    pub fn curves(&self, gt: GtMode) -> PathBuf {
        self.root.join("eval").join(format!("curves_{gt}.csv"))
    }

    pub fn class_curves(&self, gt: GtMode, d: DatasetId) -> PathBuf {
        self.root.join("eval").join(format!("class_curves_{gt}_{d}.csv"))
    }

    pub fn corpus_precision(&self) -> PathBuf {
        self.root.join("eval").join("corpus_precision.csv")
    }

    pub fn test_accuracy(&self) -> PathBuf {
        self.root.join("eval").join("test_accuracy.csv")
    }

    pub fn assignments(&self) -> PathBuf {
        self.root.join("feedback").join("assignments.csv")
    }

    pub fn votes(&self) -> PathBuf {
        self.root.join("feedback").join("votes.jsonl")
    }
}

/// Fails with `MissingInput` naming the subcommand that produces `path`.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!(
            "{} not found; run `hearsay {producer}` first",
            path.display()
        )))
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes a CSV whose first line records the config hash.
pub fn write_csv<F>(path: &Path, hash: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = format!("{HASH_PREFIX}{hash}\n").into_bytes();
    body(&mut buf)?;
    ensure_parent(path)?;
    fs::write(path, buf)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Puts the hash line on top of a CSV some other routine wrote.
pub fn stamp_csv(path: &Path, hash: &str) -> Result<()> {
    let body = fs::read_to_string(path)?;
    let body = match body.strip_prefix(HASH_PREFIX) {
        Some(rest) => rest.split_once('\n').map(|(_, b)| b).unwrap_or("").to_string(),
        None => body,
    };
    fs::write(path, format!("{HASH_PREFIX}{hash}\n{body}"))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// The hash recorded on the first line of a CSV artifact, if any.
pub fn recorded_hash(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path).ok()?;
    let first = text.lines().next()?;
    first.strip_prefix(HASH_PREFIX).map(str::to_string)
}

pub fn warn_if_stale(path: &Path, recorded: Option<&str>, current: &str) {
    if let Some(h) = recorded {
        if h != current {
            log::warn!(
                "{} was produced with config {h}, current config is {current}",
                path.display()
            );
        }
    }
}
