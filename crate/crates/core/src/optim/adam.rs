use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::HasParams;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty, added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("eps must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction. Moment buffers live on each [`crate::nn::Param`];
/// this struct owns the hyperparameters and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Adam { config, step: 0 })
    }

    /// Restores a counter saved alongside the moments.
    pub fn with_step(config: AdamConfig, step: u64) -> Result<Self> {
        let mut adam = Adam::new(config)?;
        adam.step = step;
        Ok(adam)
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter from its accumulated gradient.
    ///
    /// Gradients are checked before anything is mutated, so a numeric fault
    /// leaves both the parameters and the step counter untouched.
    pub fn step<T: Scalar, P: HasParams<T> + ?Sized>(&mut self, params: &mut P) -> Result<()> {
        let mut bad: Option<String> = None;
        params.visit_params(&mut |name, p| {
            if bad.is_none() && !p.grad.is_finite() {
                bad = Some(name.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::NumericFault(format!("gradient of parameter '{name}'")));
        }

        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let (bc1, bc2) = (T::lit(bc1), T::lit(bc2));
        let (lr, eps, wd) = (T::lit(c.lr), T::lit(c.eps), T::lit(c.weight_decay));

        params.visit_params_mut(&mut |_, p| {
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let m = p.adam_m.data_mut();
            let v = p.adam_v.data_mut();
            for i in 0..value.len() {
                let g = grad[i] + wd * value[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        Ok(())
    }
}
