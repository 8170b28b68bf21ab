//! Pure numerical kernels. The differentiable versions live on
//! [`crate::autodiff::Tape`]; these are the forward/backward building blocks.

pub mod activation;
pub mod conv;
pub mod layout;
pub mod linalg;
pub mod norm;
pub mod pool;

pub use activation::{gelu, log_softmax_rows, relu, sigmoid, softmax};
pub use conv::{conv2d, Conv2dSpec};
pub use layout::{concat_axis, concat_channels, map_to_tokens, mean_axis, slice_axis, tokens_to_map};
pub use linalg::{linear, matmul, matmul_nt, matmul_tn, transpose};
pub use norm::{layer_norm, LAYER_NORM_EPS};
pub use pool::{avg_pool2d, max_pool2d};

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout keep mask: 0 for dropped entries, `1/(1-rate)` for kept.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Tensor<T> {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
    let keep = T::lit(1.0 / (1.0 - rate));
    Tensor::from_fn(shape, |_| if rng.random::<f64>() < rate { T::zero() } else { keep })
}

/// Non-differentiable dropout; identity in eval mode or at rate 0.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, rate: f64, mode: Mode, rng: &mut R) -> Tensor<T> {
    if mode == Mode::Eval || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask::<T, R>(x.shape(), rate, rng);
    x.zip_map(&mask, |a, m| a * m).expect("mask has input shape")
}
