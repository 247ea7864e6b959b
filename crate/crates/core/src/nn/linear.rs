use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Transpose};
use crate::tensor::Tensor;

use super::{linear_init, LayerMode, Param};

/// Fully connected layer, `y = x W^T + b` with `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self> {
        Ok(Linear {
            weight: Param::zeros(&[out_features, in_features])?,
            bias: Param::zeros(&[out_features])?,
            input: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dims()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dims()[0]
    }

    pub fn init_gaussian<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        linear_init(&mut self.weight, rng)?;
        self.bias.value.fill(T::zero());
        Ok(())
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: LayerMode) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.input = match mode {
            LayerMode::Train => Some(input.clone()),
            LayerMode::Eval => None,
        };
        Ok(out)
    }

    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, features) = input.dims2("linear")?;
        let (out_f, in_f) = (self.out_features(), self.in_features());
        if features != in_f {
            return Err(Error::dim(
                "linear",
                format!("input has {features} features, layer expects {in_f}"),
            ));
        }
        let mut out = Vec::with_capacity(n * out_f);
        for _ in 0..n {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(
            n,
            in_f,
            out_f,
            T::one(),
            input.data(),
            Transpose::No,
            self.weight.value.data(),
            Transpose::Yes,
            T::one(),
            &mut out,
        );
        let out = Tensor::from_vec(&[n, out_f], out)?;
        out.ensure_finite("linear forward output")?;
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("linear backward without a train-mode forward".into()))?;
        let (n, in_f) = input.dims2("linear_backward")?;
        let out_f = self.out_features();
        if grad_output.dims() != [n, out_f] {
            return Err(Error::dim(
                "linear_backward",
                format!("grad_output {} but output is ({n}, {out_f})", grad_output.shape()),
            ));
        }
        gemm(
            out_f,
            n,
            in_f,
            T::one(),
            grad_output.data(),
            Transpose::Yes,
            input.data(),
            Transpose::No,
            T::one(),
            self.weight.grad.data_mut(),
        );
        for row in grad_output.data().chunks_exact(out_f) {
            for (gb, &g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *gb += g;
            }
        }
        let mut grad_input = vec![T::zero(); n * in_f];
        gemm(
            n,
            out_f,
            in_f,
            T::one(),
            grad_output.data(),
            Transpose::No,
            self.weight.value.data(),
            Transpose::No,
            T::zero(),
            &mut grad_input,
        );
        Tensor::from_vec(&[n, in_f], grad_input)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
