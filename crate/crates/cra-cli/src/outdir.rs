//! Output directory plumbing. Every command writes its files through an
//! [`OutDir`] so the closing manifest lists exactly what was produced.
//! Nothing here records timestamps or absolute paths: rerunning a command
//! from its echoed config yields byte-identical output trees.

use crate::error::{io_usage, CliError};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io_usage(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `name` under the output root and records it for the manifest.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, contents.as_ref()).map_err(|e| io_usage(&path, e))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::usage(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Records a file produced by other means (e.g. a checkpoint writer).
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    /// Writes `manifest.json` and consumes the directory handle. File order
    /// is sorted for stability regardless of write order.
    pub fn finish(mut self, command: &str, seed: u64) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            seed: u64,
            files: &'a [String],
        }
        self.files.sort();
        let manifest = Manifest { command, seed, files: &self.files };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::usage(format!("serializing manifest: {e}")))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| io_usage(&path, e))?;
        Ok(path)
    }
}
