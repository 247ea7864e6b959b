//! Configuration, checkpoints, the epoch loop and end-to-end runs.

mod checkpoint;
mod config;
mod epoch_log;
mod epoch_loop;
mod run;

pub use checkpoint::{Checkpoint, NamedTensor, OptimizerState, FORMAT_VERSION, MAGIC};
pub use config::TrainConfig;
pub use epoch_log::{read_epoch_log, EpochLog, EpochRecord, EPOCH_LOG_HEADER};
pub use epoch_loop::{run_epochs, EpochDriver, LoopEvent, LoopOutcome, LoopSettings, PhaseStats};
pub use run::{
    eval_report_document, evaluate_samples, run_eval, run_train, EvaluatedCheckpoint,
    RunArtifacts, BEST_CHECKPOINT_FILE, EPOCH_LOG_FILE, FINAL_CHECKPOINT_FILE, MANIFEST_FILE,
    TEST_REPORT_FILE,
};
