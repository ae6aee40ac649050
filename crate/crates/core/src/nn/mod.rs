//! A small sequential neural-network engine: tensors, layers, losses, SGD and
//! finite-difference gradient checking.
//!
//! Everything is generic over [`Scalar`]; the toolkit trains in `f32`, and
//! `f64` instantiations exist so gradient checks are not drowned in rounding
//! noise. All reductions run in a fixed order, so results are bit-identical
//! across runs.

pub mod gradcheck;
mod layer;
mod loss;
mod network;
mod params;
mod tensor;

pub use layer::LayerSpec;
pub use loss::Loss;
pub use network::{param_count, sgd_step, Network};
pub use params::{ParamLayout, ParamSet, ParamSlot};
pub use tensor::Tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub trait Scalar:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn from_u8(v: u8) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn from_u8(v: u8) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn from_u8(v: u8) -> Self {
        v as f64
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// `y[i] += a * x[i]`
#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
