//! `manifest.txt`: what a run read, what it wrote and everything needed to
//! repeat it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tvtomo_core::Result;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.txt";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

pub struct Manifest {
    dir: PathBuf,
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(dir: &Path, command: &str, argv: &[String]) -> Self {
        let mut m = Self {
            dir: dir.to_path_buf(),
            lines: Vec::new(),
        };
        m.set("tvtomo.version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m.set("argv", argv.join(" "));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.set(&format!("input.{name}"), format!("{} sha256={hash}", path.display()));
        Ok(())
    }

    /// Writes `bytes` into the run directory and records the file.
    pub fn output(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(file);
        fs::write(&path, bytes)?;
        let hash = sha256_file(&path)?;
        self.set(&format!("output.{name}"), format!("{file} sha256={hash}"));
        Ok(path)
    }

    /// Saves the effective configuration next to the manifest, then the
    /// manifest itself.
    pub fn finish(mut self, config_text: &str) -> Result<PathBuf> {
        self.output("config", CONFIG_FILE, config_text.as_bytes())?;
        let mut text = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(text, "{k}={v}");
        }
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text)?;
        Ok(path)
    }
}
