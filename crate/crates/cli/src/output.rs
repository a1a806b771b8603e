//! Output files are rendered in memory and only written once a command has
//! fully succeeded.

use std::path::{Path, PathBuf};

use coupled_otto::io::write_atomic;
use serde::Serialize;

use crate::CliError;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<PathBuf>, contents: Vec<u8>) {
        self.files.push((name.into(), contents));
    }

    pub fn render(
        &mut self,
        name: impl Into<PathBuf>,
        f: impl FnOnce(&mut Vec<u8>) -> coupled_otto::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: impl Into<PathBuf>, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(coupled_otto::Error::from)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file under `dir`, each through a temporary and rename.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(name);
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}
