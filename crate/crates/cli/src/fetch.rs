//! The only networked command: download an archive, check its hash, unpack.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FetchRecord {
    pub url: String,
    pub sha256: String,
    pub bytes: u64,
    pub extracted: bool,
}

/// Copies `input` to `out` while hashing it.
fn copy_hashed<R: Read, W: Write>(mut input: R, mut out: W) -> io::Result<(String, u64)> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = input.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        out.write_all(&buf[..n])?;
        total += n as u64;
    }
    out.flush()?;
    Ok((format!("{:x}", h.finalize()), total))
}

fn open_source(url: &str) -> anyhow::Result<Box<dyn Read>> {
    if let Some(path) = url
        .strip_prefix("file://")
        .or_else(|| (!url.contains("://")).then_some(url))
    {
        return Ok(Box::new(
            fs::File::open(path).with_context(|| format!("opening {path}"))?,
        ));
    }
    let resp = ureq::get(url).call().with_context(|| format!("downloading {url}"))?;
    Ok(Box::new(resp.into_body().into_reader()))
}

/// Downloads `url` into `dest`, verifies `expected` when given, and unpacks
/// zip archives in place. The hash is written to `dest/fetch.json`.
pub fn fetch(url: &str, dest: &Path, expected: Option<&str>, force: bool) -> anyhow::Result<FetchRecord> {
    fs::create_dir_all(dest)?;
    let name = url.rsplit('/').next().filter(|n| !n.is_empty()).unwrap_or("download");
    let archive: PathBuf = dest.join(name);
    crate::artifacts::check_writable(&archive, force)?;
    let partial = dest.join(format!("{name}.partial"));
    let (sha, bytes) = {
        let out = fs::File::create(&partial).with_context(|| format!("creating {}", partial.display()))?;
        copy_hashed(open_source(url)?, io::BufWriter::new(out))?
    };
    if let Some(exp) = expected {
        if !exp.eq_ignore_ascii_case(&sha) {
            fs::remove_file(&partial).ok();
            bail!("sha256 mismatch for {url}: expected {exp}, got {sha}");
        }
    } else {
        log::warn!("no expected hash given; recording {sha}");
    }
    fs::rename(&partial, &archive)?;

    let extracted = is_zip(&archive)?;
    if extracted {
        let f = fs::File::open(&archive)?;
        let mut z = zip::ZipArchive::new(f).with_context(|| format!("reading {}", archive.display()))?;
        z.extract(dest)
            .with_context(|| format!("extracting {}", archive.display()))?;
    }
    let record = FetchRecord {
        url: url.to_string(),
        sha256: sha,
        bytes,
        extracted,
    };
    let mut w = crate::artifacts::create_file(&dest.join("fetch.json"), true)?;
    serde_json::to_writer_pretty(&mut w, &record)?;
    writeln!(w)?;
    Ok(record)
}

fn is_zip(path: &Path) -> io::Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = fs::File::open(path)?;
    Ok(f.read(&mut magic)? == 4 && magic == *b"PK\x03\x04")
}
