use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    io::copy(&mut f, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

fn open_source(url: &str) -> Result<Box<dyn Read + Send>> {
    if url.starts_with("http://") || url.starts_with("https://") {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(30))
            .timeout_read(Duration::from_secs(120))
            .build();
        let resp = agent.get(url).call().map_err(|e| Error::Network {
            url: url.to_string(),
            reason: e.to_string(),
        })?;
        Ok(Box::new(resp.into_reader()))
    } else {
        let path = url.strip_prefix("file://").unwrap_or(url);
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Box::new(f))
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Downloads `source_url` (http, https, `file://` or a bare local path) to
/// `dest`. A `.gz` source is inflated unless `dest` itself ends in `.gz`; the
/// digest (SHA-256, hex) applies to the bytes written to `dest`.
///
/// The transfer goes to `<dest>.part` and is renamed only after verification,
/// so a failed fetch never leaves a partial or unverified file behind. An
/// existing `dest` whose digest matches (or any existing `dest` when no digest
/// is given) is left untouched.
pub fn fetch_dataset(
    source_url: &str,
    dest: &Path,
    expected_digest: Option<&str>,
) -> Result<PathBuf> {
    let expected = expected_digest.map(|d| d.trim().to_ascii_lowercase());
    if dest.is_file() {
        match &expected {
            None => return Ok(dest.to_path_buf()),
            Some(d) if sha256_file(dest)? == *d => return Ok(dest.to_path_buf()),
            Some(_) => {}
        }
    }
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = dest
        .file_name()
        .ok_or_else(|| Error::spec(format!("destination {} has no file name", dest.display())))?;
    let tmp = dest.with_file_name(format!("{}.part", file_name.to_string_lossy()));

    let inflate = url_path(source_url).ends_with(".gz") && !dest.to_string_lossy().ends_with(".gz");
    let transfer = || -> Result<String> {
        let source = open_source(source_url)?;
        let mut reader: Box<dyn Read> = if inflate {
            Box::new(GzDecoder::new(source))
        } else {
            source
        };
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = HashingWriter {
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
        };
        io::copy(&mut reader, &mut out).map_err(|e| Error::Network {
            url: source_url.to_string(),
            reason: e.to_string(),
        })?;
        out.flush().map_err(|e| Error::io(&tmp, e))?;
        Ok(hex::encode(out.hasher.finalize()))
    };
    let actual = match transfer() {
        Ok(d) => d,
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            return Err(e);
        }
    };
    if let Some(expected) = expected {
        if actual != expected {
            let _ = std::fs::remove_file(&tmp);
            return Err(Error::DigestMismatch {
                path: dest.to_path_buf(),
                expected,
                actual,
            });
        }
    }
    std::fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))?;
    Ok(dest.to_path_buf())
}

fn url_path(url: &str) -> &str {
    url.split(['?', '#']).next().unwrap_or(url)
}
