use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A learnable tensor with its gradient and Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros_like(&value);
        Param {
            grad: zeros.clone(),
            adam_m: zeros.clone(),
            adam_v: zeros,
            value,
        }
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Ok(Self::new(Tensor::zeros(dims)?))
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn accumulate(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.grad.add_assign(grad)
    }

    /// Clears the optimizer moments.
    pub fn reset_moments(&mut self) {
        self.adam_m.fill(T::zero());
        self.adam_v.fill(T::zero());
    }
}

/// Anything owning learnable parameters in a fixed, named order.
pub trait HasParams<T: Scalar> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param<T>));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |_, p| total += p.numel());
        total
    }
}

impl<T: Scalar> HasParams<T> for Vec<Param<T>> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, p) in self.iter().enumerate() {
            f(&format!("param{i}"), p);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, p) in self.iter_mut().enumerate() {
            f(&format!("param{i}"), p);
        }
    }
}
