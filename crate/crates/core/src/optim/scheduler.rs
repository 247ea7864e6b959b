use crate::error::{Error, Result};

use super::check_loss;

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a strict decrease of the validation loss.
///
/// The bad-epoch counter restarts after every reduction. There is no cooldown
/// and the rate never drops below `min_lr`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    min_lr: f64,
    best_loss: f64,
    bad_epochs: usize,
    current_lr: f64,
}

impl PlateauScheduler {
    pub const DEFAULT_FACTOR: f64 = 0.5;
    pub const DEFAULT_PATIENCE: usize = 5;
    pub const DEFAULT_MIN_LR: f64 = 1e-6;

    pub fn new(initial_lr: f64, factor: f64, patience: usize, min_lr: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Config(format!("scheduler factor must lie in (0, 1), got {factor}")));
        }
        if patience == 0 {
            return Err(Error::Config("scheduler patience must be at least 1".into()));
        }
        if !(min_lr >= 0.0) || !(initial_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(PlateauScheduler {
            factor,
            patience,
            min_lr,
            best_loss: f64::INFINITY,
            bad_epochs: 0,
            current_lr: initial_lr.max(min_lr),
        })
    }

    pub fn with_defaults(initial_lr: f64) -> Result<Self> {
        Self::new(
            initial_lr,
            Self::DEFAULT_FACTOR,
            Self::DEFAULT_PATIENCE,
            Self::DEFAULT_MIN_LR,
        )
    }

    pub fn lr(&self) -> f64 {
        self.current_lr
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn bad_epochs(&self) -> usize {
        self.bad_epochs
    }

    /// Records one epoch's validation loss and returns the rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> Result<f64> {
        check_loss(val_loss, "scheduler")?;
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.current_lr = (self.current_lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        Ok(self.current_lr)
    }
}
