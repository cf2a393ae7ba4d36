//! Network layers with explicit forward and backward passes.
//!
//! Every layer is generic over [`Real`] so the same code trains in `f32` and
//! is gradient-checked in `f64`. Forward passes return a cache that the
//! matching backward pass consumes; gradients accumulate into a structure of
//! the same type as the parameters.

mod block;
mod conv;
mod decoder;
mod embedding;
#[cfg(test)]
mod gradcheck;
mod hierarchy;
mod linear;
mod norm;
mod params;
mod unet;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array2, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

pub use block::{ResBlock, ResBlockCache};
pub use conv::{geo_conv, Aggregation, ConvCache, GeoConv};
pub use decoder::{batched_decode, decode_distance, euclidean_decode, DistMlp, DistMlpCache};
pub use embedding::EmbeddingTable;
pub use hierarchy::{geo_pool, geo_unpool, GraphHierarchy, SigmaSchedule};
pub use linear::Linear;
pub use norm::{GroupNorm, NormCache};
pub use params::{ParamSet, Tensor, TensorMut};
pub use unet::{DecoderKind, Model, NetConfig, UNet, UNetCache};

/// Width of every embedding-path feature map and of the embedding itself.
pub const WIDTH: usize = 256;

/// Floating-point element type usable by the layers.
pub trait Real:
    LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn relu<T: Real>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Zeroes `grad` wherever the ReLU input `pre` was not positive.
pub(crate) fn relu_backward<T: Real>(pre: &Array2<T>, grad: &mut Array2<T>) {
    grad.zip_mut_with(pre, |g, &x| {
        if x <= T::zero() {
            *g = T::zero();
        }
    });
}

/// Appends which side of zero every entry lies on; with the max-aggregation
/// winners this pins down the linear piece the network is evaluated on.
#[cfg(test)]
pub(crate) fn sign_pattern<T: Real>(x: &Array2<T>, out: &mut Vec<u32>) {
    out.extend(x.iter().map(|&v| (v > T::zero()) as u32));
}

pub(crate) fn check_finite<T: Real>(x: &Array2<T>, stage: &str) -> crate::Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::Numeric(format!("non-finite activations after {stage}")))
    }
}

/// Uniform in `±1/sqrt(fan_in)`.
pub(crate) fn fan_in_uniform<T: Real>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut crate::rng::Rng,
) -> Array2<T> {
    use rand::Rng;
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.gen_range(-bound..bound)))
}
