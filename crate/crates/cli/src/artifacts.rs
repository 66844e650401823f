use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
struct FileEntry {
    bytes: usize,
    sha256: String,
    role: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    arguments: &'a Value,
    seeds: &'a Value,
    config: &'a Value,
    files: &'a BTreeMap<String, FileEntry>,
}

/// Output directory that records every file it writes for the manifest.
pub struct ArtifactDir {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, role: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(e.to_string()))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        let sha256 = format!("{:x}", Sha256::digest(contents));
        self.files.insert(name.to_string(), FileEntry { bytes: contents.len(), sha256, role: role.to_string() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, role: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, role, text.as_bytes())
    }

    /// Records a file written by someone else, e.g. the scenario CSV writer.
    pub fn adopt(&mut self, name: &str, role: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        let contents = fs::read(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let sha256 = format!("{:x}", Sha256::digest(&contents));
        self.files.insert(name.to_string(), FileEntry { bytes: contents.len(), sha256, role: role.to_string() });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn finish(self, command: &str, arguments: &Value, seeds: &Value, config: &Value) -> Result<(), CliError> {
        let manifest = Manifest { command, arguments, seeds, config, files: &self.files };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}
