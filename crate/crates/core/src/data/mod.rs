//! Datasets and their on-disk formats.

mod archive;
mod cifar;
mod fetch;
mod idx;

pub use archive::{
    decode_archive, encode_archive, load_shards, read_archive, read_manifest, write_archive,
    write_shards, write_shards_annotated, ShardEntry, ShardManifest, ARCHIVE_MAGIC,
    ARCHIVE_VERSION, MANIFEST_FILE,
};
pub use cifar::{load_cifar10, parse_cifar10, CIFAR_RECORD_LEN};
pub use fetch::{fetch_dataset, sha256_file, sha256_hex};
pub use idx::{load_mnist, parse_idx_header, parse_mnist, IdxHeader, IMAGES_MAGIC, LABELS_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "MNIST")]
    Mnist,
    #[serde(rename = "CIFAR10")]
    Cifar10,
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetName::Mnist => "MNIST",
            DatasetName::Cifar10 => "CIFAR10",
            DatasetName::Synthetic => "SYNTHETIC",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageDims {
    pub const MNIST: ImageDims = ImageDims::new(28, 28, 1);
    pub const CIFAR10: ImageDims = ImageDims::new(32, 32, 3);

    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageDims {
            height,
            width,
            channels,
        }
    }

    /// Bytes per image.
    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial positions per image (channels not counted).
    pub const fn spatial(&self) -> usize {
        self.height * self.width
    }

    /// Network input shape, channels first.
    pub fn chw(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

/// An immutable labeled image collection. Images are stored row-major as
/// `N x H x W x C` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    name: DatasetName,
    dims: ImageDims,
    num_classes: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        name: DatasetName,
        dims: ImageDims,
        num_classes: usize,
        images: Vec<u8>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        match name {
            DatasetName::Mnist if dims != ImageDims::MNIST => {
                return Err(Error::format(
                    "dataset",
                    format!("MNIST images must be 28x28x1, got {dims:?}"),
                ))
            }
            DatasetName::Cifar10 if dims != ImageDims::CIFAR10 => {
                return Err(Error::format(
                    "dataset",
                    format!("CIFAR10 images must be 32x32x3, got {dims:?}"),
                ))
            }
            _ => {}
        }
        if dims.is_empty() {
            return Err(Error::format("dataset", "zero-sized images"));
        }
        if num_classes == 0 || num_classes > 256 {
            return Err(Error::format(
                "dataset",
                format!("unsupported class count {num_classes}"),
            ));
        }
        if images.len() != labels.len() * dims.len() {
            return Err(Error::format(
                "dataset",
                format!(
                    "{} pixel bytes do not match {} labels of {} bytes",
                    images.len(),
                    labels.len(),
                    dims.len()
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::format(
                "dataset",
                format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        Ok(Dataset {
            name,
            dims,
            num_classes,
            images,
            labels,
        })
    }

    pub fn name(&self) -> DatasetName {
        self.name
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.dims.len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Copies the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.dims.len();
        let mut images = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name,
            dims: self.dims,
            num_classes: self.num_classes,
            images,
            labels,
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name,
            dims: self.dims,
            num_classes: self.num_classes,
            images: self.images[..n * self.dims.len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Splits into `[0, n)` and `[n, len)`.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.head(n), self.subset(&tail))
    }

    /// Concatenates datasets with identical dims and class counts.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or(Error::Empty("dataset list"))?;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dims != first.dims || p.num_classes != first.num_classes {
                return Err(Error::Shape(format!(
                    "cannot concatenate {:?}/{} with {:?}/{}",
                    first.dims, first.num_classes, p.dims, p.num_classes
                )));
            }
            images.extend_from_slice(&p.images);
            labels.extend_from_slice(&p.labels);
        }
        Ok(Dataset {
            name: first.name,
            dims: first.dims,
            num_classes: first.num_classes,
            images,
            labels,
        })
    }

    /// Replaces labels and pixels wholesale; used when materializing shards.
    pub(crate) fn from_parts_unchecked(
        name: DatasetName,
        dims: ImageDims,
        num_classes: usize,
        images: Vec<u8>,
        labels: Vec<u8>,
    ) -> Dataset {
        debug_assert_eq!(images.len(), labels.len() * dims.len());
        Dataset {
            name,
            dims,
            num_classes,
            images,
            labels,
        }
    }

    /// Deterministic class-conditional images for tests and benchmarks:
    /// each class owns a random prototype, and samples add bounded jitter.
    pub fn synthetic(n: usize, dims: ImageDims, num_classes: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let protos: Vec<Vec<u8>> = (0..num_classes)
            .map(|_| (0..dims.len()).map(|_| rng.below(256) as u8).collect())
            .collect();
        let mut images = Vec::with_capacity(n * dims.len());
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % num_classes) as u8;
            labels.push(label);
            for &p in &protos[label as usize] {
                let jitter = rng.below(61) as i32 - 30;
                images.push((p as i32 + jitter).clamp(0, 255) as u8);
            }
        }
        Dataset {
            name: DatasetName::Synthetic,
            dims,
            num_classes,
            images,
            labels,
        }
    }

    /// Images at `indices` as a `[B, C, H, W]` tensor scaled to `[0, 1]`.
    pub fn tensor<T: Scalar>(&self, indices: &[usize]) -> Tensor<T> {
        let ImageDims {
            height,
            width,
            channels,
        } = self.dims;
        let plane = height * width;
        let table: Vec<T> = (0..=255u32)
            .map(|v| T::from_f64(v as f64 / 255.0))
            .collect();
        let mut data = vec![T::zero(); indices.len() * self.dims.len()];
        for (b, &i) in indices.iter().enumerate() {
            let img = self.image(i);
            let out = &mut data[b * self.dims.len()..(b + 1) * self.dims.len()];
            for p in 0..plane {
                for c in 0..channels {
                    out[c * plane + p] = table[img[p * channels + c] as usize];
                }
            }
        }
        Tensor::from_vec(vec![indices.len(), channels, height, width], data)
            .expect("shape matches data")
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// One node's materialized data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaterializedShard {
    pub node_id: usize,
    pub data: Dataset,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_count_mismatch() {
        let err = Dataset::new(
            DatasetName::Synthetic,
            ImageDims::new(2, 2, 1),
            2,
            vec![0; 7],
            vec![0, 1],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = Dataset::new(
            DatasetName::Synthetic,
            ImageDims::new(1, 1, 1),
            2,
            vec![0, 0],
            vec![0, 2],
        );
        assert!(err.is_err());
    }

    #[test]
    fn mnist_dims_enforced() {
        let err = Dataset::new(
            DatasetName::Mnist,
            ImageDims::new(2, 2, 1),
            10,
            vec![],
            vec![],
        );
        assert!(err.is_err());
        assert!(Dataset::new(DatasetName::Mnist, ImageDims::MNIST, 10, vec![], vec![]).is_ok());
    }

    #[test]
    fn tensor_is_channels_first() {
        // 1x2 image with 3 channels: pixel0 = (0, 51, 255), pixel1 = (255, 0, 0)
        let ds = Dataset::new(
            DatasetName::Synthetic,
            ImageDims::new(1, 2, 3),
            1,
            vec![0, 51, 255, 255, 0, 0],
            vec![0],
        )
        .unwrap();
        let t = ds.tensor::<f32>(&[0]);
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.2, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn subset_and_concat() {
        let ds = Dataset::synthetic(10, ImageDims::new(3, 3, 1), 5, 1);
        let a = ds.subset(&[0, 1, 2]);
        let b = ds.subset(&[3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(Dataset::concat(&[&a, &b]).unwrap(), ds);
        let (h, t) = ds.split_at(3);
        assert_eq!(h, a);
        assert_eq!(t, b);
    }
}
