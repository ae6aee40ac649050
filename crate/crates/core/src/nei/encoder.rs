use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ImageDims};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, LayerSpec, Loss, Network, ParamSet, Tensor};
use crate::rng::{tags, Rng};

/// Layers of the autoencoder that form the encoder: three conv blocks.
pub const ENCODER_LAYERS: usize = 6;

fn autoencoder_layers(channels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(channels, 32, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::conv(32, 32, 3, 2, 1),
        LayerSpec::Relu,
        LayerSpec::conv(32, 32, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::Upsample2x,
        LayerSpec::conv(32, 32, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::conv(32, channels, 3, 1, 1),
        LayerSpec::Sigmoid,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderHyper {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for EncoderHyper {
    fn default() -> Self {
        EncoderHyper {
            epochs: 5,
            batch: 64,
            lr: 0.01,
        }
    }
}

/// A convolutional autoencoder whose first [`ENCODER_LAYERS`] layers serve as
/// the feature extractor. Encoding requires a frozen encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    net: Network<f32>,
    dims: ImageDims,
    frozen: bool,
}

pub fn build_encoder(dims: ImageDims, seed: u64) -> Result<Encoder> {
    if dims.is_empty() {
        return Err(Error::Shape(format!("invalid image shape {dims:?}")));
    }
    let net = Network::new(&dims.chw(), autoencoder_layers(dims.channels), seed)?;
    if net.output_shape() != dims.chw() {
        return Err(Error::Shape(format!(
            "autoencoder maps {:?} to {:?}; height and width must be even",
            dims.chw(),
            net.output_shape()
        )));
    }
    Ok(Encoder {
        net,
        dims,
        frozen: false,
    })
}

impl Encoder {
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// The full autoencoder.
    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn set_params(&mut self, params: ParamSet<f32>) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        self.net.set_params(params)
    }

    /// SHA-256 of the autoencoder's parameter stream.
    pub fn fingerprint(&self) -> String {
        self.net.params().fingerprint()
    }

    /// Length of one flattened encoding.
    pub fn output_len(&self) -> usize {
        self.net.prefix(ENCODER_LAYERS).output_len()
    }

    /// Encodes `indices` of `ds`, one row per sample.
    pub fn encode(&self, ds: &Dataset, indices: &[usize]) -> Result<FeatureMatrix> {
        if !self.frozen {
            return Err(Error::spec("encoder must be frozen before encoding"));
        }
        if ds.dims() != self.dims {
            return Err(Error::Shape(format!(
                "encoder expects {:?} images, got {:?}",
                self.dims,
                ds.dims()
            )));
        }
        let enc = self.net.prefix(ENCODER_LAYERS);
        let cols = enc.output_len();
        if indices.is_empty() {
            return Ok(FeatureMatrix {
                rows: 0,
                cols,
                data: Vec::new(),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for chunk in indices.chunks(256) {
            data.extend_from_slice(enc.forward(&ds.tensor::<f32>(chunk))?.data());
        }
        Ok(FeatureMatrix {
            rows: indices.len(),
            cols,
            data,
        })
    }

    pub fn encode_all(&self, ds: &Dataset) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = (0..ds.len()).collect();
        self.encode(ds, &idx)
    }
}

/// Row-major encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn from_rows(cols: usize, data: Vec<f32>) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {cols}",
                data.len()
            )));
        }
        Ok(FeatureMatrix {
            rows: data.len() / cols,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Memoizes encodings by image bytes for one encoder.
#[derive(Debug)]
pub struct EncodingCache {
    fingerprint: String,
    map: Mutex<HashMap<Vec<u8>, Arc<[f32]>>>,
}

impl EncodingCache {
    pub fn new(enc: &Encoder) -> Self {
        EncodingCache {
            fingerprint: enc.fingerprint(),
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Encodings of every sample of `ds`, computing only unseen images.
    pub fn encode(&self, enc: &Encoder, ds: &Dataset) -> Result<Vec<Arc<[f32]>>> {
        if enc.fingerprint() != self.fingerprint {
            return Err(Error::spec("encoding cache belongs to a different encoder"));
        }
        let missing: Vec<usize> = {
            let map = self.map.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            (0..ds.len())
                .filter(|&i| !map.contains_key(ds.image(i)) && seen.insert(ds.image(i)))
                .collect()
        };
        if !missing.is_empty() {
            let fresh = enc.encode(ds, &missing)?;
            let mut map = self.map.lock().expect("cache lock");
            for (r, &i) in missing.iter().enumerate() {
                map.insert(ds.image(i).to_vec(), Arc::from(fresh.row(r)));
            }
        }
        let map = self.map.lock().expect("cache lock");
        Ok((0..ds.len())
            .map(|i| Arc::clone(&map[ds.image(i)]))
            .collect())
    }
}

/// Splits `n` samples into a training part and a 10% holdout, seeded.
pub fn holdout_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = Rng::substream(seed, &[tags::HOLDOUT]).permutation(n);
    let hold = n / 10;
    let mut train = perm[hold..].to_vec();
    let mut test = perm[..hold].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Mean reconstruction MSE of the full autoencoder over `indices`.
pub fn reconstruction_mse(enc: &Encoder, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("reconstruction set"));
    }
    let mut total = 0.0;
    for chunk in indices.chunks(256) {
        let x: Tensor<f32> = ds.tensor(chunk);
        total += enc.net.loss(&x, &x, Loss::Mse)? as f64 * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Trains the autoencoder on reconstruction MSE with plain SGD over the
/// non-holdout part of `ds`, then freezes it. Epoch `e` visits samples in
/// the order of the `(SHUFFLE, e)` substream.
pub fn train_autoencoder(
    enc: Encoder,
    ds: &Dataset,
    hyper: EncoderHyper,
    seed: u64,
) -> Result<Encoder> {
    if enc.frozen {
        return Err(Error::Frozen);
    }
    if ds.is_empty() {
        return Err(Error::Empty("autoencoder training set"));
    }
    if hyper.batch == 0 || !(hyper.lr >= 0.0) {
        return Err(Error::spec(
            "encoder batch must be positive and lr non-negative",
        ));
    }
    if ds.dims() != enc.dims {
        return Err(Error::Shape(format!(
            "encoder expects {:?} images, got {:?}",
            enc.dims,
            ds.dims()
        )));
    }
    let (train, _) = holdout_split(ds.len(), seed);
    let mut train = if train.is_empty() {
        (0..ds.len()).collect()
    } else {
        train
    };
    let mut net = enc.net;
    let lr = hyper.lr as f32;
    for epoch in 0..hyper.epochs {
        Rng::substream(seed, &[tags::SHUFFLE, epoch as u64]).shuffle(&mut train);
        for batch in train.chunks(hyper.batch) {
            let x: Tensor<f32> = ds.tensor(batch);
            let (_, g) = net.backward(&x, &x, Loss::Mse)?;
            sgd_step(net.params_mut(), &g, lr)?;
        }
    }
    Ok(Encoder {
        net,
        dims: enc.dims,
        frozen: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_output_lengths() {
        let m = build_encoder(ImageDims::MNIST, 0).unwrap();
        assert_eq!(m.output_len(), 32 * 14 * 14);
        let c = build_encoder(ImageDims::CIFAR10, 0).unwrap();
        assert_eq!(c.output_len(), 32 * 16 * 16);
        assert!(build_encoder(ImageDims::new(5, 5, 1), 0).is_err());
    }

    #[test]
    fn fingerprints_follow_seed() {
        let a = build_encoder(ImageDims::MNIST, 3).unwrap();
        let b = build_encoder(ImageDims::MNIST, 3).unwrap();
        let c = build_encoder(ImageDims::MNIST, 4).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn zero_epochs_freezes_initial_weights() {
        let ds = Dataset::synthetic(20, ImageDims::new(8, 8, 1), 2, 0);
        let enc = build_encoder(ds.dims(), 1).unwrap();
        let fp = enc.fingerprint();
        let hyper = EncoderHyper {
            epochs: 0,
            ..Default::default()
        };
        let t = train_autoencoder(enc, &ds, hyper, 1).unwrap();
        assert!(t.is_frozen());
        assert_eq!(t.fingerprint(), fp);
    }

    #[test]
    fn frozen_rejects_mutation_and_retraining() {
        let ds = Dataset::synthetic(20, ImageDims::new(8, 8, 1), 2, 0);
        let mut enc = build_encoder(ds.dims(), 1).unwrap().freeze();
        let p = enc.network().params().clone();
        assert!(matches!(enc.set_params(p), Err(Error::Frozen)));
        assert!(matches!(
            train_autoencoder(enc, &ds, EncoderHyper::default(), 0),
            Err(Error::Frozen)
        ));
    }

    #[test]
    fn encode_contract() {
        let ds = Dataset::synthetic(6, ImageDims::new(8, 8, 1), 3, 2);
        let enc = build_encoder(ds.dims(), 1).unwrap();
        assert!(enc.encode(&ds, &[0]).is_err());
        let enc = enc.freeze();
        assert_eq!(enc.encode(&ds, &[]).unwrap().rows(), 0);
        let dup = enc.encode(&ds, &[2, 2, 4]).unwrap();
        assert_eq!(dup.row(0), dup.row(1));
        let whole = enc.encode(&ds, &[0, 1, 2, 3, 4, 5]).unwrap();
        for i in 0..6 {
            assert_eq!(enc.encode(&ds, &[i]).unwrap().row(0), whole.row(i));
        }
        let other = Dataset::synthetic(2, ImageDims::new(4, 4, 1), 3, 2);
        assert!(enc.encode(&other, &[0]).is_err());
    }

    #[test]
    fn cache_matches_direct_encoding() {
        let ds = Dataset::synthetic(8, ImageDims::new(8, 8, 1), 3, 2);
        let enc = build_encoder(ds.dims(), 1).unwrap().freeze();
        let cache = EncodingCache::new(&enc);
        let rows = cache.encode(&enc, &ds).unwrap();
        let direct = enc.encode_all(&ds).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(&r[..], direct.row(i));
        }
        assert_eq!(cache.len(), 8);
        cache.encode(&enc, &ds).unwrap();
        assert_eq!(cache.len(), 8);
    }
}
