use std::time::Instant;

use crate::error::{Error, Result};
use crate::optim::{EarlyStopper, PlateauScheduler, StopDecision};

use super::epoch_log::{EpochLog, EpochRecord};

/// Mean loss and accuracy of one pass over a split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// The work done inside an epoch. The loop owns ordering and state machines;
/// a driver owns the model and data.
pub trait EpochDriver {
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<PhaseStats>;

    fn validate(&mut self, epoch: usize) -> Result<PhaseStats>;

    /// Called when the validation loss is strictly below every earlier one.
    fn on_best(&mut self, _epoch: usize, _val_loss: f64) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopEvent {
    Train(usize),
    Validate(usize),
    Best(usize),
    Scheduler(usize),
    EarlyStop(usize),
}

#[derive(Clone, Debug)]
pub struct LoopSettings {
    pub max_epochs: usize,
    pub scheduler: PlateauScheduler,
    pub stopper: EarlyStopper,
    pub log_epoch_time: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopOutcome {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::NumericFault(msg) => Error::NumericFault(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

/// Epochs `1..=max_epochs`, each: train, validate, scheduler update,
/// early-stop check. Records are appended to `log` as they complete.
pub fn run_epochs<D: EpochDriver + ?Sized>(
    driver: &mut D,
    mut settings: LoopSettings,
    mut log: Option<&mut EpochLog>,
    mut trace: Option<&mut Vec<LoopEvent>>,
) -> Result<LoopOutcome> {
    let mut emit = |ev: LoopEvent| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(ev);
        }
    };
    let mut records = Vec::new();
    let mut best_epoch = 0;
    let mut best_val_loss = f64::INFINITY;
    let mut stopped_early = false;

    for epoch in 1..=settings.max_epochs {
        let started = Instant::now();
        let lr = settings.scheduler.lr();

        emit(LoopEvent::Train(epoch));
        let train = driver.train_epoch(epoch, lr).map_err(|e| at_epoch(e, epoch))?;
        if !train.loss.is_finite() {
            return Err(Error::NumericFault(format!("epoch {epoch}: training loss {}", train.loss)));
        }

        emit(LoopEvent::Validate(epoch));
        let val = driver.validate(epoch).map_err(|e| at_epoch(e, epoch))?;
        if val.loss < best_val_loss {
            best_val_loss = val.loss;
            best_epoch = epoch;
            emit(LoopEvent::Best(epoch));
            driver.on_best(epoch, val.loss)?;
        }

        emit(LoopEvent::Scheduler(epoch));
        settings.scheduler.observe(val.loss).map_err(|e| at_epoch(e, epoch))?;

        emit(LoopEvent::EarlyStop(epoch));
        let decision = settings.stopper.observe(val.loss).map_err(|e| at_epoch(e, epoch))?;

        let record = EpochRecord {
            epoch,
            train_loss: train.loss,
            train_acc: train.accuracy,
            val_loss: val.loss,
            val_acc: val.accuracy,
            lr,
            epoch_time_sec: if settings.log_epoch_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log::info!(
            "epoch {epoch}: train_loss {:.4} train_acc {:.4} val_loss {:.4} val_acc {:.4} lr {:.2e}",
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc,
            lr
        );
        if let Some(log) = log.as_deref_mut() {
            log.append(&record)?;
        }
        records.push(record);

        if decision == StopDecision::Stop {
            log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            stopped_early = true;
            break;
        }
    }
    Ok(LoopOutcome {
        records,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}
