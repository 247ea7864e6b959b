use crate::error::{Error, Result};

use super::check_loss;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once `patience` consecutive epochs fail to reach `best - min_delta`.
///
/// An epoch improves when `val_loss <= best - min_delta` (inclusive).
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopper {
    min_delta: f64,
    patience: usize,
    best_loss: f64,
    epochs_since_improve: usize,
}

impl EarlyStopper {
    pub const DEFAULT_MIN_DELTA: f64 = 1e-3;
    pub const DEFAULT_PATIENCE: usize = 10;

    pub fn new(min_delta: f64, patience: usize) -> Result<Self> {
        if !(min_delta >= 0.0) || patience == 0 {
            return Err(Error::Config(
                "early stopping needs min_delta >= 0 and patience >= 1".into(),
            ));
        }
        Ok(EarlyStopper {
            min_delta,
            patience,
            best_loss: f64::INFINITY,
            epochs_since_improve: 0,
        })
    }

    pub fn with_defaults() -> Self {
        EarlyStopper {
            min_delta: Self::DEFAULT_MIN_DELTA,
            patience: Self::DEFAULT_PATIENCE,
            best_loss: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn epochs_since_improve(&self) -> usize {
        self.epochs_since_improve
    }

    pub fn observe(&mut self, val_loss: f64) -> Result<StopDecision> {
        check_loss(val_loss, "early stopper")?;
        if val_loss <= self.best_loss - self.min_delta {
            self.best_loss = val_loss;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        Ok(if self.epochs_since_improve >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        })
    }
}
