//! Hybrid CNN-transformer image classifier built on a small tape-based
//! autodiff engine.
//!
//! The network runs two parallel streams over a single-channel image: a
//! hierarchical transformer stream (convolutional stem, four stages of CMT
//! blocks with spatially reduced multi-head attention, conv + max/avg pooling
//! refinement after each stage) and a residual CNN stream. Their final maps
//! are concatenated channel-wise, gated by pixel attention, pooled and
//! classified.
//!
//! All math is generic over [`Scalar`] (`f32` for training, `f64` for
//! finite-difference checks). Concrete aliases are provided below.

pub mod attention;
pub mod autodiff;
pub mod backbone;
pub mod cmt;
pub mod data;
pub mod error;
pub mod eval;
pub mod head;
pub mod model;
pub mod ops;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autodiff::{NodeId, Tape};
pub use error::{Error, Result};
pub use model::{Forward, Model, ModelConfig};
pub use ops::Mode;
pub use param::{ParamId, ParamKind, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
