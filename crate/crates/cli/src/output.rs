//! Output directories: tracked writes, the checksum manifest, and the
//! `.partial` / `error.json` failure markers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = ".partial";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<P: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub parameters: P,
    pub files: Vec<FileEntry>,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    schema_version: u32,
    #[serde(flatten)]
    error: &'a CliError,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// An output directory under construction. Carries a `.partial` marker
/// until [`OutDir::finish`] writes the manifest.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::stage("write", format!("{}: {e}", root.display())))?;
        for stale in [MANIFEST_FILE, ERROR_FILE] {
            let p = root.join(stale);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| CliError::stage("write", format!("{}: {e}", p.display())))?;
            }
        }
        let out = Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        };
        out.write_untracked(PARTIAL_MARKER, b"")?;
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_untracked(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::stage("write", format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::stage("write", format!("{}: {e}", path.display())))
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write_untracked(rel, bytes)?;
        self.track(rel);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, to_json(value).as_bytes())
    }

    /// Records a file some other writer already put under the root.
    pub fn track(&mut self, rel: &str) {
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
    }

    fn entries(&self) -> Result<Vec<FileEntry>, CliError> {
        let mut files = self.files.clone();
        files.sort();
        files
            .into_iter()
            .map(|rel| {
                let path = self.root.join(&rel);
                let bytes =
                    fs::read(&path).map_err(|e| CliError::stage("write", format!("{}: {e}", path.display())))?;
                Ok(FileEntry {
                    path: rel,
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect()
    }

    /// Writes `manifest.json` and removes the `.partial` marker.
    pub fn finish<P: Serialize>(self, command: &str, parameters: P) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            parameters,
            files: self.entries()?,
        };
        self.write_untracked(MANIFEST_FILE, to_json(&manifest).as_bytes())?;
        let marker = self.root.join(PARTIAL_MARKER);
        fs::remove_file(&marker).map_err(|e| CliError::stage("write", format!("{}: {e}", marker.display())))?;
        Ok(self.root.join(MANIFEST_FILE))
    }

    /// Leaves the marker in place and records the error next to it.
    pub fn fail(&self, err: &CliError) {
        let report = ErrorReport {
            schema_version: 1,
            error: err,
        };
        if let Err(e) = self.write_untracked(ERROR_FILE, to_json(&report).as_bytes()) {
            log::error!("could not write {ERROR_FILE}: {e}");
        }
    }
}

/// Writes `error.json` into `dir` for failures that happen before an
/// [`OutDir`] exists.
pub fn write_error(dir: &Path, err: &CliError) {
    if fs::create_dir_all(dir).is_err() {
        return;
    }
    let report = ErrorReport {
        schema_version: 1,
        error: err,
    };
    if let Err(e) = fs::write(dir.join(ERROR_FILE), to_json(&report)) {
        log::error!("could not write {ERROR_FILE}: {e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn finish_removes_marker_and_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        assert!(dir.path().join(PARTIAL_MARKER).exists());
        out.write("b.txt", b"b").unwrap();
        out.write("a/a.txt", b"a").unwrap();
        out.finish("test", ()).unwrap();
        assert!(!dir.path().join(PARTIAL_MARKER).exists());
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        let paths: Vec<&str> = m["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["path"].as_str().unwrap())
            .collect();
        assert_eq!(paths, ["a/a.txt", "b.txt"]);
    }
}
