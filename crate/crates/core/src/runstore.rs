//! Run directory layout and atomic file writes.
//!
//! A run directory is the unit of reproducibility:
//!
//! ```text
//! runs/<run-id>/
//!   config.toml                  frozen copy of the run configuration
//!   generations/<digest>.json    one generation record per file
//!   verdicts/<kind>/<digest>.json
//!   reports/                     CSV tables and JSON figure specs
//! ```

use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(runs_dir: impl AsRef<Path>, run_id: &str) -> Result<Self> {
        if run_id.is_empty() || run_id.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!(
                "invalid run id {run_id:?}"
            )));
        }
        let root = runs_dir.as_ref().join(run_id);
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn generations_dir(&self) -> PathBuf {
        self.root.join("generations")
    }

    pub fn generation_path(&self, digest: &str) -> PathBuf {
        self.generations_dir().join(format!("{digest}.json"))
    }

    pub fn verdicts_dir(&self, kind: &str) -> PathBuf {
        self.root.join("verdicts").join(kind)
    }

    pub fn verdict_path(&self, kind: &str, digest: &str) -> PathBuf {
        self.verdicts_dir(kind).join(format!("{digest}.json"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// All record files under a directory, sorted by file name so iteration
    /// order never depends on the filesystem.
    pub fn list_records(dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        match std::fs::read_dir(dir) {
            Ok(entries) => {
                for entry in entries {
                    let entry = entry.map_err(|e| Error::io(dir, e))?;
                    let path = entry.path();
                    if path.extension().is_some_and(|ext| ext == "json") {
                        paths.push(path);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(dir, e)),
        }
        paths.sort();
        Ok(paths)
    }
}

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| Error::InvalidArgument(format!("no parent dir for {path:?}")))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp.as_file(), contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
