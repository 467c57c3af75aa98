use std::fs;
use std::path::{Path, PathBuf};

use ebm_recon::numerics::dpn1::{self, Tensor};

use crate::error::CliError;

/// Output directory that has been checked for emptiness but not yet created.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    /// Refuses a non-empty existing directory unless `force`. Touches
    /// nothing on disk.
    pub fn check(root: PathBuf, force: bool) -> Result<Self, CliError> {
        if root.exists() {
            if !root.is_dir() {
                return Err(CliError::Config(format!(
                    "output {} exists and is not a directory",
                    root.display()
                )));
            }
            let non_empty = fs::read_dir(&root)
                .map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?
                .next()
                .is_some();
            if non_empty && !force {
                return Err(CliError::Config(format!(
                    "output directory {} is not empty (pass --force to write into it)",
                    root.display()
                )));
            }
        }
        Ok(OutDir { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Creates `root/sub` (or `root` for an empty `sub`).
    pub fn create(&self, sub: &str) -> Result<PathBuf, CliError> {
        let dir = if sub.is_empty() {
            self.root.clone()
        } else {
            self.root.join(sub)
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(dpn1::write_atomic(path, text.as_bytes())?)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    Ok(dpn1::write_atomic(path, bytes)?)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), CliError> {
    Ok(dpn1::save_tensor(path, t)?)
}

pub fn image_name(index: usize, ext: &str) -> String {
    format!("img_{index:04}.{ext}")
}
