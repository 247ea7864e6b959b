//! Parameter-free layers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool2d_backward, maxpool2d_forward,
    Shape, Tensor,
};

use super::LayerMode;

#[derive(Clone, Debug, Default)]
pub struct Relu {
    active: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>, mode: LayerMode) -> Tensor<T> {
        if mode == LayerMode::Train {
            self.active = Some(input.data().iter().map(|&x| x > T::zero()).collect());
        } else {
            self.active = None;
        }
        input.map(|x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn backward<T: Scalar>(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let active = self
            .active
            .as_ref()
            .ok_or_else(|| Error::State("relu backward without a train-mode forward".into()))?;
        if active.len() != grad_output.numel() {
            return Err(Error::dim("relu_backward", "gradient size differs from input"));
        }
        let g = grad_output
            .data()
            .iter()
            .zip(active)
            .map(|(&g, &on)| if on { g } else { T::zero() })
            .collect();
        Tensor::from_vec(grad_output.dims(), g)
    }

    pub fn clear_cache(&mut self) {
        self.active = None;
    }
}

#[derive(Clone, Debug, Default)]
pub struct MaxPool2d {
    cache: Option<(Vec<usize>, Shape)>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        MaxPool2d::default()
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>, mode: LayerMode) -> Result<Tensor<T>> {
        let (out, argmax) = maxpool2d_forward(input)?;
        self.cache = match mode {
            LayerMode::Train => Some((argmax, input.shape().clone())),
            LayerMode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, shape) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("maxpool backward without a train-mode forward".into()))?;
        maxpool2d_backward(argmax, grad_output, shape)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Shape>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool::default()
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = global_avg_pool_forward(input)?;
        self.input_shape = Some(input.shape().clone());
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::State("global average pool backward without a forward".into()))?;
        global_avg_pool_backward(grad_output, shape)
    }

    pub fn clear_cache(&mut self) {
        self.input_shape = None;
    }
}
