use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::LayerMode;

#[derive(Clone, Debug)]
enum Mask<T> {
    Identity,
    Scale(Vec<T>),
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
/// so evaluation is a plain identity.
#[derive(Clone, Debug)]
pub struct Dropout<T> {
    rate: f64,
    mask: Option<Mask<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor<T>,
        mode: LayerMode,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        if mode == LayerMode::Eval || self.rate == 0.0 {
            self.mask = Some(Mask::Identity);
            return Ok(input.clone());
        }
        let keep_scale = T::lit(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..input.numel())
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let out: Vec<T> = input.data().iter().zip(&mask).map(|(&x, &s)| x * s).collect();
        self.mask = Some(Mask::Scale(mask));
        Tensor::from_vec(input.dims(), out)
    }

    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.mask {
            None => Err(Error::State("dropout backward without a forward".into())),
            Some(Mask::Identity) => Ok(grad_output.clone()),
            Some(Mask::Scale(mask)) => {
                if mask.len() != grad_output.numel() {
                    return Err(Error::dim("dropout_backward", "mask/gradient size mismatch"));
                }
                let g = grad_output
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&g, &s)| g * s)
                    .collect();
                Tensor::from_vec(grad_output.dims(), g)
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
