//! Outputs are written under `<out>/.tmp` and moved into `<out>` only after the
//! command succeeds, so an interrupted run never replaces finished results.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub struct Staging {
    out: PathBuf,
    tmp: PathBuf,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self, CliError> {
        let tmp = out.join(".tmp");
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
        Ok(Self { out: out.to_path_buf(), tmp })
    }

    pub fn dir(&self) -> &Path {
        &self.tmp
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, v: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        self.write(name, s)
    }

    /// Moves every staged entry into the output directory, replacing older copies.
    pub fn commit(self) -> Result<(), CliError> {
        let mut entries: Vec<PathBuf> = fs::read_dir(&self.tmp)
            .map_err(|e| io(&self.tmp, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| io(&self.tmp, e)))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for src in entries {
            let dst = self.out.join(src.file_name().expect("staged entry has a name"));
            if dst.is_dir() {
                fs::remove_dir_all(&dst).map_err(|e| io(&dst, e))?;
            } else if dst.exists() {
                fs::remove_file(&dst).map_err(|e| io(&dst, e))?;
            }
            fs::rename(&src, &dst).map_err(|e| io(&src, e))?;
        }
        fs::remove_dir(&self.tmp).map_err(|e| io(&self.tmp, e))
    }
}
