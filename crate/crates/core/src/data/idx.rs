//! MNIST IDX containers: a big-endian `u32` magic whose low byte is the
//! dimension count, one big-endian `u32` per dimension, then unsigned bytes.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{Dataset, DatasetName, ImageDims};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn header_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    /// Total file length implied by the header.
    pub fn file_len(&self) -> usize {
        self.header_len() + self.payload_len()
    }
}

/// Parses the header for a file that must carry `expected_magic`.
pub fn parse_idx_header(bytes: &[u8], expected_magic: u32) -> Result<IdxHeader> {
    let what = if expected_magic == IMAGES_MAGIC {
        "IDX images"
    } else {
        "IDX labels"
    };
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::format(what, format!("truncated header ({} bytes)", bytes.len())))
    };
    let magic = word(0)?;
    if magic != expected_magic {
        return Err(Error::WrongMagic {
            what,
            expected: expected_magic.to_string(),
            found: magic.to_string(),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (1..=ndims).map(word).collect::<Result<Vec<_>>>()?;
    Ok(IdxHeader { magic, dims })
}

fn payload<'a>(bytes: &'a [u8], header: &IdxHeader, what: &'static str) -> Result<&'a [u8]> {
    let body = &bytes[header.header_len()..];
    let want = header.payload_len();
    if body.len() < want {
        return Err(Error::format(
            what,
            format!(
                "truncated payload: header declares {want} bytes, found {}",
                body.len()
            ),
        ));
    }
    if body.len() > want {
        return Err(Error::format(
            what,
            format!(
                "{} trailing bytes after declared payload",
                body.len() - want
            ),
        ));
    }
    Ok(body)
}

/// Builds an MNIST dataset from in-memory (already decompressed) IDX files.
pub fn parse_mnist(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let ih = parse_idx_header(images, IMAGES_MAGIC)?;
    let lh = parse_idx_header(labels, LABELS_MAGIC)?;
    let (n, rows, cols) = (
        ih.dims[0] as usize,
        ih.dims[1] as usize,
        ih.dims[2] as usize,
    );
    if (rows, cols) != (28, 28) {
        return Err(Error::format(
            "IDX images",
            format!("expected 28x28 images, got {rows}x{cols}"),
        ));
    }
    if lh.dims[0] as usize != n {
        return Err(Error::format(
            "MNIST",
            format!(
                "image/label count mismatch: {n} images, {} labels",
                lh.dims[0]
            ),
        ));
    }
    let pixels = payload(images, &ih, "IDX images")?;
    let labs = payload(labels, &lh, "IDX labels")?;
    Dataset::new(
        DatasetName::Mnist,
        ImageDims::MNIST,
        10,
        pixels.to_vec(),
        labs.to_vec(),
    )
}

/// Reads a file, transparently inflating gzip content.
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format("gzip stream", format!("{}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_maybe_gz(images_path)?;
    let labels = read_maybe_gz(labels_path)?;
    parse_mnist(&images, &labels)
        .map_err(|e| e.context(format!("loading {}", images_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn two_sample_fixture_round_trips_pixels() {
        let pixels: Vec<u8> = (0..2 * 784).map(|i| (i % 251) as u8).collect();
        let ds = parse_mnist(&idx_images(2, 28, 28, &pixels), &idx_labels(&[7, 3])).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dims(), ImageDims::MNIST);
        assert_eq!(ds.images(), pixels.as_slice());
        assert_eq!(ds.labels(), &[7, 3]);
    }

    #[test]
    fn official_header_sizes() {
        let mut hdr = Vec::new();
        for w in [IMAGES_MAGIC, 60000, 28, 28] {
            hdr.extend_from_slice(&w.to_be_bytes());
        }
        let h = parse_idx_header(&hdr, IMAGES_MAGIC).unwrap();
        assert_eq!(h.dims, vec![60000, 28, 28]);
        assert_eq!(h.file_len(), 16 + 60000 * 28 * 28);
        assert_eq!(h.file_len(), 47_040_016);
    }

    #[test]
    fn labels_with_image_magic_rejected() {
        let mut bad = idx_labels(&[1, 2]);
        bad[..4].copy_from_slice(&IMAGES_MAGIC.to_be_bytes());
        let imgs = idx_images(2, 28, 28, &[0; 2 * 784]);
        let err = parse_mnist(&imgs, &bad).unwrap_err();
        assert!(err.to_string().contains("wrong magic"), "{err}");
    }

    #[test]
    fn truncated_and_mismatched_rejected() {
        let imgs = idx_images(2, 28, 28, &[0; 784 + 10]);
        assert!(parse_mnist(&imgs, &idx_labels(&[1, 2])).is_err());
        let imgs = idx_images(2, 28, 28, &[0; 2 * 784]);
        assert!(parse_mnist(&imgs, &idx_labels(&[1, 2, 3])).is_err());
        assert!(parse_mnist(&imgs[..10], &idx_labels(&[1, 2])).is_err());
        assert!(parse_mnist(&imgs, &idx_labels(&[1, 12])).is_err());
    }
}
