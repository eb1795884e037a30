//! Run manifests and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use drmpc_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct ConfigRef {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: ConfigRef,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub rng: &'static str,
    pub outputs: Vec<String>,
    pub duration_s: f64,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, config_bytes: &[u8], parameters: serde_json::Value) -> Self {
        RunManifest {
            tool: "drmpc",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: ConfigRef {
                path: config_path.display().to_string(),
                sha256: sha256_hex(config_bytes),
            },
            parameters,
            seed: None,
            rng: drmpc_core::sim::RNG_ID,
            outputs: Vec::new(),
            duration_s: 0.0,
            exit_code: 0,
        }
    }
}

/// Writes whole files into one output directory; each file appears
/// atomically (temp file in the same directory, then rename).
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(&self, mut manifest: RunManifest) -> Result<()> {
        manifest.outputs = self.written.clone();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), text.as_bytes())
    }
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_of_known_bytes() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn outputs_are_listed_once_and_manifest_last() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&tmp.path().join("run")).unwrap();
        out.write("a.csv", b"x\n").unwrap();
        out.write("a.csv", b"y\n").unwrap();
        out.write_json("b.json", &serde_json::json!({"k": 1})).unwrap();
        let m = RunManifest::new("roa", Path::new("c.json"), b"{}", serde_json::json!({}));
        out.finish(m).unwrap();
        let text = std::fs::read_to_string(out.path().join(MANIFEST_NAME)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["outputs"], serde_json::json!(["a.csv", "b.json"]));
        assert_eq!(v["config"]["sha256"], sha256_hex(b"{}"));
        assert_eq!(std::fs::read_to_string(out.path().join("a.csv")).unwrap(), "y\n");
        let leftovers = std::fs::read_dir(out.path()).unwrap().count();
        assert_eq!(leftovers, 3);
    }
}
