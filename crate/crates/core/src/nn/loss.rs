use serde::{Deserialize, Serialize};

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over every output element of `(y - t)^2`.
    Mse,
    /// Softmax over each sample's outputs, cross-entropy against target
    /// distributions (usually one-hot), averaged over the batch.
    SoftmaxCe,
}

impl Loss {
    /// Loss contribution of one sample and `d(batch loss)/d(output)` for it,
    /// given the batch size the mean is taken over.
    pub(crate) fn sample<T: Scalar>(&self, y: &[T], t: &[T], batch: usize, grad: &mut Vec<T>) -> T {
        grad.clear();
        match self {
            Loss::Mse => {
                let denom = T::from_f64((batch * y.len()) as f64);
                let two = T::from_f64(2.0);
                let mut acc = T::zero();
                for (&yi, &ti) in y.iter().zip(t) {
                    let d = yi - ti;
                    acc += d * d;
                    grad.push(two * d / denom);
                }
                acc / denom
            }
            Loss::SoftmaxCe => {
                let b = T::from_f64(batch as f64);
                let max = y.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let mut z = T::zero();
                for &v in y {
                    z += (v - max).exp();
                }
                let log_z = z.ln();
                let mut mass = T::zero();
                let mut acc = T::zero();
                for (&yi, &ti) in y.iter().zip(t) {
                    mass += ti;
                    if ti != T::zero() {
                        acc -= ti * (yi - max - log_z);
                    }
                }
                for (&yi, &ti) in y.iter().zip(t) {
                    let p = (yi - max - log_z).exp();
                    grad.push((p * mass - ti) / b);
                }
                acc / b
            }
        }
    }
}
