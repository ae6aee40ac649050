use rayon::prelude::*;

use super::{LayerSpec, Loss, ParamSet, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{tags, Rng};

/// A sequential network: layer list, statically inferred shapes, and a flat
/// parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    layers: Vec<LayerSpec>,
    /// `shapes[i]` is the per-sample input shape of layer `i`; the last entry
    /// is the output shape.
    shapes: Vec<Vec<usize>>,
    params: ParamSet<T>,
}

fn infer_shapes(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
    }
    let mut shapes = vec![input_shape.to_vec()];
    for (i, l) in layers.iter().enumerate() {
        let next = l
            .output_shape(&shapes[i])
            .map_err(|e| e.context(format!("layer {i} ({})", l.name())))?;
        shapes.push(next);
    }
    Ok(shapes)
}

impl<T: Scalar> Network<T> {
    /// Builds a network with Xavier-uniform weights and zero biases drawn from
    /// the `INIT` substream of `seed`, layer by layer in storage order.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(input_shape, layers)?;
        let mut rng = Rng::substream(seed, &[tags::INIT]);
        for slot in net.params.slots().to_vec() {
            let spec = net.layers[slot.layer];
            let (fan_in, fan_out) = spec.fans().expect("parameterized layer");
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                &mut net.params.values_mut()[slot.offset..slot.offset + spec.weight_count()];
            for w in weights {
                *w = T::from_f64((2.0 * rng.unit() - 1.0) * bound);
            }
        }
        Ok(net)
    }

    pub fn zeroed(input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &layers)?;
        let params = ParamSet::zeros_for(&layers);
        Ok(Network {
            layers,
            shapes,
            params,
        })
    }

    pub fn with_params(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        params: ParamSet<T>,
    ) -> Result<Self> {
        let mut net = Self::zeroed(input_shape, layers)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("at least the input shape")
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamSet<T>) -> Result<()> {
        if !self.params.same_layout(&params) {
            return Err(Error::Layout(
                "parameter set does not match network layout".into(),
            ));
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self.params.cast(),
        }
    }

    /// The first `n` layers with their parameters.
    pub fn prefix(&self, n: usize) -> Network<T> {
        let n = n.min(self.layers.len());
        let layers = self.layers[..n].to_vec();
        let mut params = ParamSet::zeros_for(&layers);
        let end = params.len();
        params
            .values_mut()
            .copy_from_slice(&self.params.values()[..end]);
        Network {
            layers,
            shapes: self.shapes[..=n].to_vec(),
            params,
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.shape()[1..] != *self.input_shape() {
            return Err(Error::Shape(format!(
                "batch samples have shape {:?}, network expects {:?}",
                &batch.shape()[1..],
                self.input_shape()
            )));
        }
        Ok(())
    }

    /// Runs one sample through every layer.
    pub fn forward_sample(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.input_len());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(
                self.params.layer_values(i),
                &self.shapes[i],
                &cur,
                &mut next,
            );
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let outs: Vec<Vec<T>> = (0..batch.batch())
            .into_par_iter()
            .map(|b| self.forward_sample(batch.sample(b)))
            .collect();
        let mut shape = vec![batch.batch()];
        shape.extend_from_slice(self.output_shape());
        Tensor::from_vec(shape, outs.concat())
    }

    /// Index of the largest output per sample (first one on ties).
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        let out = self.forward(batch)?;
        Ok((0..out.batch())
            .map(|b| {
                let row = out.sample(b);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Mean batch loss without gradients.
    pub fn loss(&self, batch: &Tensor<T>, targets: &Tensor<T>, loss: Loss) -> Result<T> {
        let out = self.forward(batch)?;
        if targets.shape() != out.shape() {
            return Err(Error::Shape(format!(
                "targets {:?} do not match outputs {:?}",
                targets.shape(),
                out.shape()
            )));
        }
        let mut scratch = Vec::new();
        let mut total = T::zero();
        for b in 0..out.batch() {
            total += loss.sample(out.sample(b), targets.sample(b), out.batch(), &mut scratch);
        }
        Ok(total)
    }

    /// Mean batch loss and its gradient with respect to every parameter.
    /// Samples are processed in batch order, so gradients are bit-reproducible.
    pub fn backward(
        &self,
        batch: &Tensor<T>,
        targets: &Tensor<T>,
        loss: Loss,
    ) -> Result<(T, ParamSet<T>)> {
        self.check_batch(batch)?;
        if targets.batch() != batch.batch() || targets.shape()[1..] != *self.output_shape() {
            return Err(Error::Shape(format!(
                "targets {:?} do not match outputs [{}, {:?}]",
                targets.shape(),
                batch.batch(),
                self.output_shape()
            )));
        }
        let n = batch.batch();
        let mut grads = self.params.zeros_like();
        let mut total = T::zero();
        let first_param_layer = self.params.slots().first().map(|s| s.layer);
        let mut acts: Vec<Vec<T>> = vec![Vec::new(); self.layers.len() + 1];
        let mut dy = Vec::new();
        let mut dx = Vec::new();
        for b in 0..n {
            acts[0].clear();
            acts[0].extend_from_slice(batch.sample(b));
            for (i, layer) in self.layers.iter().enumerate() {
                let (head, tail) = acts.split_at_mut(i + 1);
                layer.forward(
                    self.params.layer_values(i),
                    &self.shapes[i],
                    &head[i],
                    &mut tail[0],
                );
            }
            total += loss.sample(&acts[self.layers.len()], targets.sample(b), n, &mut dy);
            for (i, layer) in self.layers.iter().enumerate().rev() {
                let need_dx = first_param_layer.is_some_and(|f| i > f);
                let dparams = match self.params.slot_of(i) {
                    Some(s) => &mut grads.values_mut()[s.offset..s.offset + s.len],
                    None => &mut [][..],
                };
                layer.backward(
                    self.params.layer_values(i),
                    &self.shapes[i],
                    &acts[i],
                    &acts[i + 1],
                    &dy,
                    dparams,
                    need_dx.then_some(&mut dx),
                );
                if !need_dx {
                    break;
                }
                std::mem::swap(&mut dy, &mut dx);
            }
        }
        Ok((total, grads))
    }
}

/// `params <- params - lr * grads`.
pub fn sgd_step<T: Scalar>(params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: T) -> Result<()> {
    if !params.same_layout(grads) {
        return Err(Error::Layout(
            "gradient layout differs from parameters".into(),
        ));
    }
    if !(lr >= T::zero()) {
        return Err(Error::spec("learning rate must be non-negative"));
    }
    for (p, &g) in params.values_mut().iter_mut().zip(grads.values()) {
        *p -= lr * g;
    }
    Ok(())
}

pub fn param_count<T: Scalar>(net: &Network<T>) -> usize {
    net.param_count()
}
