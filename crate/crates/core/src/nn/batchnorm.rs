//! Batch normalization over the channel axis of `[N, C]` or `[N, C, H, W]`
//! inputs.
//!
//! Train mode normalizes with the biased batch variance and folds the
//! unbiased estimate into `running_var`. Eval mode normalizes with the running
//! statistics and leaves them untouched.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::{LayerMode, Param};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
struct Cache<T> {
    shape: Shape,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: LayerMode,
}

#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<Cache<T>>,
}

/// `(batch, channels, spatial)` view of a rank-2 or rank-4 input.
fn layout<T: Scalar>(input: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *input.dims() {
        [n, c] => Ok((n, c, 1)),
        [n, c, h, w] => Ok((n, c, h * w)),
        _ => Err(Error::dim(
            "batchnorm",
            format!("expected rank 2 or 4, got {}", input.shape()),
        )),
    }
}

impl<T: Scalar> BatchNorm<T> {
    /// `gamma = 1`, `beta = 0`, running mean 0 and running variance 1.
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: Param::new(Tensor::full(&[channels], T::one())?),
            beta: Param::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Eval-mode normalization with the running statistics; no caching.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, spatial) = layout(input)?;
        if c != self.channels() {
            return Err(Error::dim(
                "batchnorm",
                format!("input has {c} channels, layer has {}", self.channels()),
            ));
        }
        let (mean, inv_std) = self.running_affine();
        let x = input.data();
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * spatial;
                let (mu, is, g, be) = (
                    mean[ch],
                    inv_std[ch],
                    self.gamma.value.data()[ch],
                    self.beta.value.data()[ch],
                );
                for i in base..base + spatial {
                    out[i] = g * ((x[i] - mu) * is) + be;
                }
            }
        }
        let out = Tensor::from_vec(input.dims(), out)?;
        out.ensure_finite("batchnorm forward output")?;
        Ok(out)
    }

    fn running_affine(&self) -> (Vec<T>, Vec<T>) {
        let mean = self.running_mean.data().to_vec();
        let inv_std = self
            .running_var
            .data()
            .iter()
            .map(|v| T::lit(1.0 / (v.to_f64_lossy() + self.eps).sqrt()))
            .collect();
        (mean, inv_std)
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: LayerMode) -> Result<Tensor<T>> {
        let (n, c, spatial) = layout(input)?;
        if c != self.channels() {
            return Err(Error::dim(
                "batchnorm",
                format!("input has {c} channels, layer has {}", self.channels()),
            ));
        }
        let m = n * spatial;
        let x = input.data();
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            LayerMode::Train => {
                if m < 2 {
                    return Err(Error::DegenerateStatistics(format!(
                        "train-mode batchnorm needs at least 2 values per channel, got {m}"
                    )));
                }
                let mut mean = vec![0.0f64; c];
                let mut var = vec![0.0f64; c];
                for ch in 0..c {
                    let mut sum = 0.0;
                    for b in 0..n {
                        let base = (b * c + ch) * spatial;
                        sum += x[base..base + spatial]
                            .iter()
                            .map(|v| v.to_f64_lossy())
                            .sum::<f64>();
                    }
                    let mu = sum / m as f64;
                    let mut sq = 0.0;
                    for b in 0..n {
                        let base = (b * c + ch) * spatial;
                        sq += x[base..base + spatial]
                            .iter()
                            .map(|v| (v.to_f64_lossy() - mu).powi(2))
                            .sum::<f64>();
                    }
                    mean[ch] = mu;
                    var[ch] = sq / m as f64;
                }
                let unbias = m as f64 / (m as f64 - 1.0);
                let mom = self.momentum;
                for ch in 0..c {
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = T::lit((1.0 - mom) * rm.to_f64_lossy() + mom * mean[ch]);
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = T::lit((1.0 - mom) * rv.to_f64_lossy() + mom * var[ch] * unbias);
                }
                (mean, var)
            }
            LayerMode::Eval => (
                self.running_mean.data().iter().map(|v| v.to_f64_lossy()).collect(),
                self.running_var.data().iter().map(|v| v.to_f64_lossy()).collect(),
            ),
        };

        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::lit(1.0 / (v + self.eps).sqrt()))
            .collect();
        let mean: Vec<T> = mean.into_iter().map(T::lit).collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * spatial;
                let (mu, is, g, be) = (
                    mean[ch],
                    inv_std[ch],
                    self.gamma.value.data()[ch],
                    self.beta.value.data()[ch],
                );
                for i in base..base + spatial {
                    let xh = (x[i] - mu) * is;
                    xhat[i] = xh;
                    out[i] = g * xh + be;
                }
            }
        }
        let out = Tensor::from_vec(input.dims(), out)?;
        out.ensure_finite("batchnorm forward output")?;
        self.cache = Some(Cache {
            shape: input.shape().clone(),
            xhat,
            inv_std,
            mode,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batchnorm backward without a forward".into()))?;
        if grad_output.shape() != &cache.shape {
            return Err(Error::dim(
                "batchnorm_backward",
                format!("grad_output {} vs input {}", grad_output.shape(), cache.shape),
            ));
        }
        let (n, c, spatial) = layout(grad_output)?;
        let m = T::lit((n * spatial) as f64);
        let dy = grad_output.data();
        let mut dx = vec![T::zero(); dy.len()];
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for b in 0..n {
                let base = (b * c + ch) * spatial;
                for i in base..base + spatial {
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * cache.xhat[i];
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            self.beta.grad.data_mut()[ch] += sum_dy;
            let g = self.gamma.value.data()[ch];
            let is = cache.inv_std[ch];
            for b in 0..n {
                let base = (b * c + ch) * spatial;
                for i in base..base + spatial {
                    dx[i] = match cache.mode {
                        LayerMode::Train => {
                            g * is * (dy[i] - sum_dy / m - cache.xhat[i] * sum_dy_xhat / m)
                        }
                        LayerMode::Eval => g * is * dy[i],
                    };
                }
            }
        }
        let dx = Tensor::from_vec(grad_output.dims(), dx)?;
        dx.ensure_finite("batchnorm grad_input")?;
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
