//! Stateful layers with cached activations for the backward pass.

mod batchnorm;
mod conv;
mod dropout;
pub mod init;
mod linear;
mod loss;
mod param;
mod simple;

pub use batchnorm::BatchNorm;
pub use conv::Conv2d;
pub use dropout::Dropout;
pub use init::{he_init, linear_init};
pub use linear::Linear;
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use param::{HasParams, Param};
pub use simple::{GlobalAvgPool, MaxPool2d, Relu};

/// Train enables dropout and batch statistics; Eval uses running statistics
/// and makes dropout the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LayerMode {
    #[default]
    Train,
    Eval,
}
