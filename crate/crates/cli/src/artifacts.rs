//! Output files, hashing and the run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Output directory that refuses to replace existing files unless forced.
pub struct OutDir {
    pub root: PathBuf,
    force: bool,
}

impl OutDir {
    pub fn new(root: &Path, force: bool) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            force,
        })
    }

    /// Checks every name up front so a run fails before doing any work.
    pub fn claim(&self, names: &[String]) -> anyhow::Result<()> {
        for n in names {
            check_writable(&self.root.join(n), self.force)?;
        }
        Ok(())
    }

    pub fn create(&self, name: &str) -> anyhow::Result<BufWriter<fs::File>> {
        create_file(&self.root.join(name), self.force)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        // Serialize first so a failure leaves no partial file behind.
        let text = serde_json::to_string_pretty(value)?;
        let mut w = self.create(name)?;
        writeln!(w, "{text}")?;
        w.flush()?;
        Ok(())
    }
}

pub fn check_writable(path: &Path, force: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        bail!("{} already exists (use --force to overwrite)", path.display());
    }
    Ok(())
}

pub fn create_file(path: &Path, force: bool) -> anyhow::Result<BufWriter<fs::File>> {
    check_writable(path, force)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// SHA-256 of a value's JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for e in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Hash over the relative path and bytes of every session file under the two
/// corpus parts, plus the labels file when given. Independent of listing order.
pub fn corpus_hash(root: &Path, labels: Option<&Path>) -> anyhow::Result<String> {
    let mut files = Vec::new();
    for part in [mousedyn::ingest::TRAINING_DIR, mousedyn::ingest::TEST_DIR] {
        collect_files(&root.join(part), &mut files)?;
    }
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(root).unwrap_or(f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(f).with_context(|| format!("reading {}", f.display()))?);
    }
    if let Some(l) = labels {
        h.update(b"labels\0");
        h.update(fs::read(l).with_context(|| format!("reading {}", l.display()))?);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Seed and config hash stamped into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Stamp {
    pub seed: u64,
    pub config_hash: String,
}

impl Stamp {
    pub fn preamble(&self) -> Vec<String> {
        vec![
            format!("seed={}", self.seed),
            format!("config_hash={}", self.config_hash),
        ]
    }

    pub fn write_preamble<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for line in self.preamble() {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool_version: &'static str,
    pub git_describe: String,
    pub corpus_sha256: Option<String>,
    pub seed: u64,
    pub config_hash: &'a str,
    pub config: &'a C,
    pub artifacts: Vec<String>,
}
