//! Dataset directory layout, loading, and download.
//!
//! MNIST lives in `<data>/MNIST/` as the four standard IDX files (optionally
//! gzipped), or as a combined `images-idx3-ubyte` / `labels-idx1-ubyte` pair
//! whose last fifth is the test set. CIFAR-10 lives in `<data>/CIFAR10/`
//! (or its `cifar-10-batches-bin/` subdirectory) as the binary batches. When
//! the dataset subdirectory is absent, the data directory itself is searched.

use std::fs::File;
use std::path::{Path, PathBuf};

use fednoniid_core::data::{fetch_dataset, load_cifar10, load_mnist, sha256_file};
use fednoniid_core::Dataset;

use crate::config::{DatasetMode, RunConfig};
use crate::CliError;

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];
pub const MNIST_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";
pub const CIFAR_MIRROR: &str = "https://www.cs.toronto.edu/~kriz";
pub const CIFAR_ARCHIVE: &str = "cifar-10-binary.tar.gz";
pub const CIFAR_SUBDIR: &str = "cifar-10-batches-bin";

fn dataset_dir(cfg: &RunConfig) -> PathBuf {
    let root = cfg.data_dir();
    let sub = root.join(cfg.dataset_mode.name().to_string());
    if sub.is_dir() {
        sub
    } else {
        root
    }
}

/// `name` or `name.gz` inside `dir`, whichever exists.
fn find(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
}

fn missing(dir: &Path, what: &str) -> CliError {
    CliError::data(format!(
        "no {what} found in {} (run `fednoniid fetch` or set paths.data_dir / FEDNONIID_DATA_DIR)",
        dir.display()
    ))
}

/// Train and test sets, capped by the `subset` block.
pub fn load_train_test(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let dir = dataset_dir(cfg);
    let (train, test) = match cfg.dataset_mode {
        DatasetMode::Mnist => load_mnist_dir(&dir)?,
        DatasetMode::Cifar10 => load_cifar_dir(&dir)?,
    };
    let cap = |ds: Dataset, n: Option<usize>| match n {
        Some(n) if n < ds.len() => ds.head(n),
        _ => ds,
    };
    Ok((cap(train, cfg.subset.train), cap(test, cfg.subset.test)))
}

fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset), CliError> {
    let standard: Vec<Option<PathBuf>> = MNIST_FILES.iter().map(|f| find(dir, f)).collect();
    if let [Some(ti), Some(tl), Some(vi), Some(vl)] = &standard[..] {
        return Ok((load_mnist(ti, tl)?, load_mnist(vi, vl)?));
    }
    match (
        find(dir, "images-idx3-ubyte"),
        find(dir, "labels-idx1-ubyte"),
    ) {
        (Some(i), Some(l)) => {
            let all = load_mnist(&i, &l)?;
            Ok(all.split_at(all.len() - all.len() / 5))
        }
        _ => Err(missing(dir, "MNIST IDX files")),
    }
}

fn load_cifar_dir(dir: &Path) -> Result<(Dataset, Dataset), CliError> {
    let nested = dir.join(CIFAR_SUBDIR);
    let dir = if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    };
    let batches: Vec<PathBuf> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .filter(|p| p.is_file())
        .collect();
    let test = dir.join("test_batch.bin");
    if batches.is_empty() || !test.is_file() {
        return Err(missing(&dir, "CIFAR-10 binary batches"));
    }
    Ok((load_cifar10(&batches)?, load_cifar10(&[test])?))
}

fn join_source(base: &str, name: &str) -> String {
    format!("{}/{name}", base.trim_end_matches('/'))
}

/// Downloads the configured dataset and returns the written files with their
/// SHA-256 digests. Digests listed in `paths.digests` are enforced.
pub fn fetch(cfg: &RunConfig) -> Result<Vec<(PathBuf, String)>, CliError> {
    let dir = cfg.data_dir().join(cfg.dataset_mode.name().to_string());
    let digest = |name: &str| cfg.paths.digests.get(name).map(String::as_str);
    let mut out = Vec::new();
    match cfg.dataset_mode {
        DatasetMode::Mnist => {
            let base = cfg.paths.source_url.as_deref().unwrap_or(MNIST_MIRROR);
            for name in MNIST_FILES {
                let dest = dir.join(name);
                let path = fetch_dataset(
                    &join_source(base, &format!("{name}.gz")),
                    &dest,
                    digest(name),
                )?;
                let sha = sha256_file(&path)?;
                out.push((path, sha));
            }
        }
        DatasetMode::Cifar10 => {
            let base = cfg.paths.source_url.as_deref().unwrap_or(CIFAR_MIRROR);
            let dest = dir.join(CIFAR_ARCHIVE);
            let path = fetch_dataset(
                &join_source(base, CIFAR_ARCHIVE),
                &dest,
                digest(CIFAR_ARCHIVE),
            )?;
            let file = File::open(&path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            tar::Archive::new(flate2::read::GzDecoder::new(file))
                .unpack(&dir)
                .map_err(|e| CliError::data(format!("unpacking {}: {e}", path.display())))?;
            let sha = sha256_file(&path)?;
            out.push((path, sha));
        }
    }
    Ok(out)
}
