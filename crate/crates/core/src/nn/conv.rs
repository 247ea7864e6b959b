use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv2d_backward, conv2d_forward, Tensor};

use super::{he_init, LayerMode, Param};

/// Square-kernel convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    stride: usize,
    padding: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Conv2d {
            weight: Param::zeros(&[out_channels, in_channels, kernel, kernel])?,
            bias: Param::zeros(&[out_channels])?,
            stride,
            padding,
            input: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dims()[0]
    }

    /// He-normal weights (fan-out mode), zero bias.
    pub fn init_he<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let d = self.weight.value.dims();
        let fan_out = d[0] * d[2] * d[3];
        he_init(&mut self.weight, fan_out, rng)?;
        self.bias.value.fill(T::zero());
        Ok(())
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(
            input,
            &self.weight.value,
            &self.bias.value,
            self.stride,
            self.padding,
        )
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: LayerMode) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.input = match mode {
            LayerMode::Train => Some(input.clone()),
            LayerMode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward without a train-mode forward".into()))?;
        let grads = conv2d_backward(
            input,
            &self.weight.value,
            grad_output,
            self.stride,
            self.padding,
        )?;
        self.weight.accumulate(&grads.weight)?;
        self.bias.accumulate(&grads.bias)?;
        Ok(grads.input)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
