//! Compact CNN image classifier with its complete training pipeline:
//! stratified splitting, class-weighted cross-entropy, Adam with weight decay,
//! plateau learning-rate decay, early stopping and macro-averaged metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient checks). The aliases below name the concrete instantiations.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{CustomCnn, CustomCnnConfig};
pub use nn::{HasParams, LayerMode, Param};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

/// Training-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Gradient-check precision tensor.
pub type Tensor64 = Tensor<f64>;
/// The model as trained and checkpointed.
pub type Model = CustomCnn<f32>;
/// Double-precision model used by finite-difference checks.
pub type Model64 = CustomCnn<f64>;
pub type Param32 = Param<f32>;
