//! Fixtures shared by the benchmarks.

use fednoniid_core::data::ImageDims;
use fednoniid_core::fedsim::{build_model, ModelArch};
use fednoniid_core::{Dataset, Network};

/// MNIST-shaped synthetic data.
pub fn mnist_like(n: usize, seed: u64) -> Dataset {
    Dataset::synthetic(n, ImageDims::MNIST, 10, seed)
}

pub fn mlp() -> Network<f32> {
    build_model(ModelArch::Mlp, ImageDims::MNIST, 10, 0).expect("mlp builds")
}

pub fn cnn() -> Network<f32> {
    build_model(ModelArch::Cnn, ImageDims::CIFAR10, 10, 0).expect("cnn builds")
}
