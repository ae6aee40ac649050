//! CIFAR-10 binary batches: fixed 3073-byte records of one label byte followed
//! by 1024 red, 1024 green and 1024 blue bytes (row-major planes).

use std::path::Path;

use super::{Dataset, DatasetName, ImageDims};
use crate::error::{Error, Result};

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 1024;

/// Parses concatenated records, converting planes to interleaved `HxWxC`.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::format(
            "CIFAR-10 batch",
            format!(
                "length {} is not a multiple of {CIFAR_RECORD_LEN}",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut images = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::format(
                "CIFAR-10 batch",
                format!("record {i} has label {} (must be < 10)", rec[0]),
            ));
        }
        labels.push(rec[0]);
        let planes = &rec[1..];
        for p in 0..1024 {
            images.extend_from_slice(&[planes[p], planes[1024 + p], planes[2048 + p]]);
        }
    }
    Dataset::new(DatasetName::Cifar10, ImageDims::CIFAR10, 10, images, labels)
}

/// Loads and concatenates batches in the given order.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut all = Vec::new();
    for p in batch_paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        if bytes.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::format(
                "CIFAR-10 batch",
                format!(
                    "{}: length {} is not a multiple of {CIFAR_RECORD_LEN}",
                    p.display(),
                    bytes.len()
                ),
            ));
        }
        all.extend_from_slice(&bytes);
    }
    parse_cifar10(&all)
}
