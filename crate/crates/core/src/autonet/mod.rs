//! A small reverse-mode differentiation engine covering exactly the layers
//! the refiner needs.
//!
//! Each layer exposes a `forward` that returns its output together with a
//! cache, and a `backward` that consumes the cache and an output gradient,
//! accumulates parameter gradients in place and returns the input gradient.
//! Networks chain these calls in reverse order.

mod activation;
mod adam;
pub mod checkpoint;
mod conv;
mod gemm;
mod linear;
mod norm;
mod pool;
mod tensor;

use rand::Rng;

pub use activation::{
    concat_backward, concat_forward, l2_normalize_backward, l2_normalize_forward, relu_backward, relu_forward,
    NormalizeCache, MIN_NORMALIZE_NORM,
};
pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use conv::{Conv2d, Conv2dCache};
pub use linear::{Linear, LinearCache};
pub use norm::{BatchNorm2d, BatchNormCache, BN_EPS, BN_MOMENTUM};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, MaxPoolCache};
pub use tensor::Tensor;

/// Whether batch statistics or running statistics are used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Access to a layer's persistent tensors (parameters and buffers) by name.
pub trait Layer {
    fn tensors(&self) -> Vec<(&'static str, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)>;
}

/// `U(−1/√fan_in, 1/√fan_in)`, tracking gradients.
pub(crate) fn uniform_fan_in<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect();
    Tensor::parameter(shape, data).expect("shape matches data")
}
