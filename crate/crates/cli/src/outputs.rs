//! Transactional output writing: every artifact is staged to a `.tmp`
//! sibling and renamed into place only when the whole command succeeds, so a
//! failing run leaves no partial outputs behind.

use std::path::{Path, PathBuf};

use crate::cli_error::{CliError, CliResult};

pub struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
    direct: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Outputs {
        Outputs {
            staged: Vec::new(),
            direct: Vec::new(),
            committed: false,
        }
    }

    /// Register a file written in place: kept on commit, removed on failure.
    /// For writers that produce sibling files of their own.
    pub fn written_in_place(&mut self, path: &Path) {
        self.direct.push(path.to_path_buf());
    }

    fn temp_path(final_path: &Path) -> PathBuf {
        let mut name = final_path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(".tmp");
        final_path.with_file_name(name)
    }

    /// Stage raw bytes for `final_path`.
    pub fn stage_bytes(&mut self, final_path: &Path, bytes: &[u8]) -> CliResult<()> {
        let tmp = Self::temp_path(final_path);
        std::fs::write(&tmp, bytes)
            .map_err(|e| CliError::new("io", format!("writing {}: {e}", tmp.display())))?;
        self.staged.push((tmp, final_path.to_path_buf()));
        Ok(())
    }

    /// Rename everything into place.
    pub fn commit(mut self) -> CliResult<()> {
        for (tmp, final_path) in &self.staged {
            std::fs::rename(tmp, final_path).map_err(|e| {
                CliError::new(
                    "io",
                    format!("committing {}: {e}", final_path.display()),
                )
            })?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = std::fs::remove_file(tmp);
            }
            for path in &self.direct {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}
