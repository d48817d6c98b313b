//! Output directory with a run manifest listing every emitted file.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub cli_version: &'static str,
    pub core_version: &'static str,
    pub subcommand: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub rng: &'static str,
    pub parallel: bool,
    pub jobs: Option<usize>,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the config file bytes.
    pub config_sha256: Option<String>,
    /// Parameters after defaults and flag overrides; rerunning with this as
    /// `params` and the same seed reproduces the outputs.
    pub effective_params: serde_json::Value,
    pub effective_params_sha256: String,
    pub files: Vec<FileEntry>,
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let contents = contents.as_ref();
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes `manifest.json` with the file list collected so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<PathBuf, CliError> {
        manifest.files = self.files;
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }
}
