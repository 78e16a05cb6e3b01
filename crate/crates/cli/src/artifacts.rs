//! Artifact emission: files, checksums, the run manifest, PPM strips.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use latentdirs::generator::ImageTensor;

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects emitted files so the manifest can checksum the whole run.
pub struct Bundle {
    out_dir: PathBuf,
    command: &'static str,
    entries: Vec<(String, String, usize)>, // name, sha256, bytes
    extra: Vec<(String, String)>,
}

impl Bundle {
    pub fn create(out_dir: &Path, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Config(format!("creating {}: {e}", out_dir.display())))?;
        Ok(Bundle {
            out_dir: out_dir.to_path_buf(),
            command,
            entries: Vec::new(),
            extra: Vec::new(),
        })
    }

    /// Record a manifest key that is not a file (config hash, seed, ...).
    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.extra.push((key.to_string(), value.into()));
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", path.display())))?;
        self.entries
            .push((name.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, text.as_bytes())
    }

    /// Write `manifest.txt`. `wall_seconds` is the only entry expected to
    /// differ between identical runs; every `file` line is deterministic.
    pub fn finish(self, wall_seconds: f64) -> Result<(), CliError> {
        let mut text = String::from("latentdirs manifest v1\n");
        writeln!(text, "command = {}", self.command).unwrap();
        writeln!(text, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
        for (key, value) in &self.extra {
            writeln!(text, "{key} = {value}").unwrap();
        }
        writeln!(text, "wall_seconds = {wall_seconds:.3}").unwrap();
        for (name, hash, bytes) in &self.entries {
            writeln!(text, "file {name} sha256={hash} bytes={bytes}").unwrap();
        }
        let path = self.out_dir.join("manifest.txt");
        fs::write(&path, text)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", path.display())))
    }
}

/// A horizontal strip of same-side images as one P6 PPM.
pub fn ppm_strip(images: &[ImageTensor]) -> Result<Vec<u8>, CliError> {
    if images.is_empty() {
        return Err(CliError::Config("empty image strip".into()));
    }
    let side = images[0].side();
    if images.iter().any(|im| im.side() != side) {
        return Err(CliError::Config("strip images differ in size".into()));
    }
    let width = side * images.len();
    let mut out = format!("P6\n{width} {side}\n255\n").into_bytes();
    for row in 0..side {
        for img in images {
            for col in 0..side {
                for ch in 0..3 {
                    let v = (255.0 * img.at(row, col, ch)).round().clamp(0.0, 255.0) as u8;
                    out.push(v);
                }
            }
        }
    }
    Ok(out)
}
