//! Adam, plateau learning-rate decay and early stopping.

mod adam;
mod early_stop;
mod scheduler;

pub use adam::{Adam, AdamConfig};
pub use early_stop::{EarlyStopper, StopDecision};
pub use scheduler::PlateauScheduler;

use crate::error::{Error, Result};

fn check_loss(loss: f64, who: &str) -> Result<()> {
    if loss.is_nan() {
        return Err(Error::NumericFault(format!("{who} received a NaN validation loss")));
    }
    Ok(())
}
