//! Run directories: atomic artifact writes and the manifest that lists them.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const TOOL: &str = "phaselab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub status: String,
    pub artifacts: Vec<Artifact>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))
            .with_context(|| format!("reading manifest in {}", dir.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// An output directory being filled by one command.
pub struct RunDir {
    root: PathBuf,
    command: String,
    config_hash: String,
    started: String,
    artifacts: Vec<Artifact>,
    notes: Vec<String>,
}

impl RunDir {
    /// Nothing is created on disk until the first write.
    pub fn new(root: PathBuf, command: &str, config_json: &str) -> Self {
        RunDir {
            root,
            command: command.to_string(),
            config_hash: sha256_hex(config_json.as_bytes()),
            started: now(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Write an artifact (path relative to the run directory) and record its hash.
    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let bytes = contents.as_ref();
        write_atomic(&self.root.join(rel), bytes)?;
        let entry = Artifact { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
        match self.artifacts.iter_mut().find(|a| a.path == rel) {
            Some(a) => *a = entry,
            None => self.artifacts.push(entry),
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, s)
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    /// Write the manifest last, listing every artifact of this run.
    pub fn finish(mut self, status: &str) -> Result<RunManifest> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: self.command,
            config_hash: self.config_hash,
            started: self.started,
            finished: now(),
            status: status.to_string(),
            artifacts: self.artifacts,
            notes: self.notes,
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        write_atomic(&self.root.join(MANIFEST), s.as_bytes())?;
        Ok(manifest)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Format a float at 17 significant digits.
pub fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::new(dir.path().join("run"), "test", "{}");
        assert!(!dir.path().join("run").exists());
        run.write("b.csv", "x\n1\n").unwrap();
        run.write("sub/a.json", "{}").unwrap();
        run.write("b.csv", "x\n2\n").unwrap();
        let m = run.finish("clean").unwrap();
        assert_eq!(m.artifacts.len(), 2);
        assert_eq!(m.artifacts[0].path, "b.csv");
        assert_eq!(m.artifact("b.csv").unwrap().sha256, sha256_hex(b"x\n2\n"));
        let read = RunManifest::read(&dir.path().join("run")).unwrap();
        assert_eq!(read, m);
        assert_eq!(std::fs::read_to_string(dir.path().join("run/b.csv")).unwrap(), "x\n2\n");
    }

    #[test]
    fn no_temp_files_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("f.txt"), b"hello").unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("f.txt")]);
    }
}
