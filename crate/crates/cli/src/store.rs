//! Output directory: write-once artifacts and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// First and last per-path seed, for Monte Carlo commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_seeds: Option<[u64; 2]>,
    pub versions: BTreeMap<String, String>,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<Entry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Written,
    Unchanged,
}

pub struct Store {
    dir: PathBuf,
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp.{}", std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `name` once. An existing file is left alone when its bytes
    /// match and is an error otherwise.
    pub fn put(&self, name: &str, bytes: &[u8]) -> Result<Outcome, CliError> {
        let path = self.path(name);
        if path.exists() {
            return if fs::read(&path)? == bytes {
                Ok(Outcome::Unchanged)
            } else {
                Err(CliError::Numeric(format!(
                    "refusing to overwrite {} with different contents",
                    path.display()
                )))
            };
        }
        atomic_write(&path, bytes)?;
        Ok(Outcome::Written)
    }

    pub fn manifest(&self) -> Result<Manifest, CliError> {
        let path = self.path(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        serde_json::from_slice(&fs::read(&path)?)
            .map_err(|e| CliError::Missing(format!("unreadable manifest {}: {e}", path.display())))
    }

    /// Appends `entry` unless an identical one is already recorded.
    pub fn record(&self, entry: Entry) -> Result<(), CliError> {
        let mut m = self.manifest()?;
        if m.entries.contains(&entry) {
            return Ok(());
        }
        m.entries.push(entry);
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| CliError::Numeric(e.to_string()))?;
        bytes.push(b'\n');
        atomic_write(&self.path(MANIFEST), &bytes)
    }
}
