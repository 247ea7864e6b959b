use std::path::{Path, PathBuf};

use crate::data::{
    compute_class_weights, make_batches, scan_dataset, stratified_split, BatchOptions,
    ClassWeights, SampleRef, SplitKind, SplitManifest,
};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::model::{CustomCnn, CustomCnnConfig};
use crate::nn::{softmax_cross_entropy, HasParams, LayerMode};
use crate::optim::Adam;
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::epoch_log::{EpochLog, EpochRecord};
use super::epoch_loop::{run_epochs, EpochDriver, LoopSettings, PhaseStats};

pub const MANIFEST_FILE: &str = "split_manifest.json";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const FINAL_CHECKPOINT_FILE: &str = "final.ccnn";
pub const BEST_CHECKPOINT_FILE: &str = "best.ccnn";
pub const TEST_REPORT_FILE: &str = "test_report.json";

/// Which weights produced the headline test metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvaluatedCheckpoint {
    Best,
    Final,
}

impl EvaluatedCheckpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            EvaluatedCheckpoint::Best => "best",
            EvaluatedCheckpoint::Final => "final",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub split_manifest: PathBuf,
    pub epoch_log: PathBuf,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub test_report: PathBuf,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub evaluated: EvaluatedCheckpoint,
    pub report: MetricsReport,
}

fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<usize>> {
    let (_, c) = logits.dims2("argmax")?;
    Ok(logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Running weighted-mean loss and accuracy over batches.
#[derive(Default)]
struct Tally {
    loss_sum: f64,
    weight_sum: f64,
    correct: usize,
    seen: usize,
}

impl Tally {
    fn add<T: Scalar>(&mut self, loss: T, targets: &[usize], predicted: &[usize], weights: Option<&[T]>) {
        let w: f64 = match weights {
            Some(w) => targets.iter().map(|&t| w[t].to_f64_lossy()).sum(),
            None => targets.len() as f64,
        };
        self.loss_sum += loss.to_f64_lossy() * w;
        self.weight_sum += w;
        self.correct += targets.iter().zip(predicted).filter(|(t, p)| t == p).count();
        self.seen += targets.len();
    }

    fn stats(&self) -> PhaseStats {
        PhaseStats {
            loss: self.loss_sum / self.weight_sum,
            accuracy: self.correct as f64 / self.seen as f64,
        }
    }
}

/// Eval-mode pass over `samples` (no augmentation). Returns the weighted mean
/// loss, accuracy and the confusion matrix.
pub fn evaluate_samples<T: Scalar>(
    model: &CustomCnn<T>,
    samples: &[SampleRef],
    image_size: usize,
    batch_size: usize,
    class_weights: Option<&[T]>,
) -> Result<(PhaseStats, ConfusionMatrix)> {
    if samples.is_empty() {
        return Err(Error::Evaluation("cannot evaluate an empty split".into()));
    }
    let opts = BatchOptions {
        batch_size,
        shuffle: false,
        augment: None,
        seed: 0,
        image_size,
    };
    let mut tally = Tally::default();
    let mut cm = ConfusionMatrix::new(model.num_classes());
    for batch in make_batches(samples, &opts, 0)? {
        let batch = batch?;
        let logits = model.predict_logits(&batch.images.cast::<T>())?;
        let (loss, _) = softmax_cross_entropy(&logits, &batch.targets, class_weights)?;
        let predicted = argmax_rows(&logits)?;
        cm.update(&batch.targets, &predicted)?;
        tally.add(loss, &batch.targets, &predicted, class_weights);
    }
    Ok((tally.stats(), cm))
}

struct ModelDriver<'a> {
    model: CustomCnn<f32>,
    adam: Adam,
    train: &'a [SampleRef],
    val: &'a [SampleRef],
    train_opts: BatchOptions,
    weights: Vec<f32>,
    seed: u64,
    class_names: &'a [String],
    settings: toml::Table,
    best_path: PathBuf,
}

impl ModelDriver<'_> {
    fn checkpoint(&self, best_val_loss: f64, epoch: usize) -> Result<Checkpoint> {
        Checkpoint::capture(
            &self.model,
            self.class_names,
            self.settings.clone(),
            Some(&self.adam),
            best_val_loss,
            epoch as u64,
        )
    }
}

impl EpochDriver for ModelDriver<'_> {
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<PhaseStats> {
        self.model.set_mode(LayerMode::Train);
        self.adam.set_lr(lr);
        let mut tally = Tally::default();
        for (b, batch) in make_batches(self.train, &self.train_opts, epoch)?.enumerate() {
            let batch = batch?;
            if batch.targets.len() < 2 {
                // Batch statistics are undefined for a single sample.
                log::warn!("epoch {epoch}: skipping final batch of size {}", batch.targets.len());
                continue;
            }
            self.model.zero_grads();
            let mut dropout_rng = rng::stream(self.seed, &[tag::DROPOUT, epoch as u64, b as u64]);
            let logits = self.model.forward(&batch.images, &mut dropout_rng)?;
            let (loss, grad) =
                softmax_cross_entropy(&logits, &batch.targets, Some(&self.weights))?;
            self.model.backward(&grad)?;
            self.adam.step(&mut self.model)?;
            tally.add(loss, &batch.targets, &argmax_rows(&logits)?, Some(&self.weights));
        }
        self.model.clear_caches();
        if tally.seen == 0 {
            return Err(Error::Precondition(
                "training split yields no batch of at least 2 samples".into(),
            ));
        }
        Ok(tally.stats())
    }

    fn validate(&mut self, _epoch: usize) -> Result<PhaseStats> {
        self.model.set_mode(LayerMode::Eval);
        let (stats, _) = evaluate_samples(
            &self.model,
            self.val,
            self.train_opts.image_size,
            self.train_opts.batch_size,
            Some(&self.weights),
        )?;
        Ok(stats)
    }

    fn on_best(&mut self, epoch: usize, val_loss: f64) -> Result<()> {
        self.checkpoint(val_loss, epoch)?.save(&self.best_path)
    }
}

fn report_document(report: &MetricsReport, split: SplitKind, which: Option<(EvaluatedCheckpoint, u64)>) -> String {
    let mut extra = vec![("split", format!("\"{split}\""))];
    if let Some((which, epoch)) = which {
        extra.push(("checkpoint", format!("\"{}\"", which.as_str())));
        extra.push(("epoch", epoch.to_string()));
    }
    report.to_json_document(&extra)
}

/// Full training run: scan, split, build, epoch loop, test evaluation.
/// On a write failure every artifact created so far is removed.
pub fn run_train(config: &TrainConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let out = &config.output_dir;
    let artifacts = [
        MANIFEST_FILE,
        EPOCH_LOG_FILE,
        FINAL_CHECKPOINT_FILE,
        BEST_CHECKPOINT_FILE,
        TEST_REPORT_FILE,
    ]
    .map(|f| out.join(f));
    let result = train_inner(config, &artifacts);
    if let Err(Error::Io { .. }) = &result {
        for path in &artifacts {
            let _ = std::fs::remove_file(path);
            let _ = std::fs::remove_file(path.with_extension("tmp"));
        }
    }
    result
}

fn train_inner(config: &TrainConfig, paths: &[PathBuf; 5]) -> Result<RunArtifacts> {
    let [manifest_path, log_path, final_path, best_path, report_path] = paths.clone();

    let index = scan_dataset(&config.dataset_root)?;
    let split = stratified_split(&index, config.seed)?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    if split.val.is_empty() {
        return Err(Error::DatasetStructure(
            "validation split is empty; every class needs at least 7 images".into(),
        ));
    }
    std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    SplitManifest::from_assignment(&split).write(&manifest_path)?;

    let model_config = CustomCnnConfig {
        dropout_rate: config.dropout,
        ..CustomCnnConfig::reference(split.classes.len())
    };
    let model = CustomCnn::<f32>::build(model_config, config.seed)?;
    let weights = if config.use_class_weights {
        compute_class_weights(&split.class_counts(SplitKind::Train))?
    } else {
        ClassWeights::uniform(split.classes.len())
    };
    log::info!(
        "{} classes, {} train / {} val / {} test images, {} parameters",
        split.classes.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
        model.param_count()
    );

    let mut driver = ModelDriver {
        model,
        adam: Adam::new(config.adam())?,
        train: &split.train,
        val: &split.val,
        train_opts: BatchOptions {
            batch_size: config.batch_size,
            shuffle: true,
            augment: config.augment_config(),
            seed: config.seed,
            image_size: config.image_size,
        },
        weights: weights.as_scalars(),
        seed: config.seed,
        class_names: &split.classes,
        settings: config.snapshot_table(),
        best_path: best_path.clone(),
    };
    let mut log = EpochLog::create(&log_path)?;
    let settings = LoopSettings {
        max_epochs: config.max_epochs,
        scheduler: config.scheduler()?,
        stopper: config.early_stopper()?,
        log_epoch_time: config.log_epoch_time,
    };
    let outcome = run_epochs(&mut driver, settings, Some(&mut log), None)?;
    let last_epoch = outcome.records.len();
    driver
        .checkpoint(outcome.best_val_loss, last_epoch)?
        .save(&final_path)?;

    let (evaluated, eval_path) = if config.eval_final_model {
        (EvaluatedCheckpoint::Final, &final_path)
    } else {
        (EvaluatedCheckpoint::Best, &best_path)
    };
    let ck = Checkpoint::load(eval_path)?;
    let mut model: CustomCnn<f32> = ck.restore_model()?;
    model.set_mode(LayerMode::Eval);
    let (_, cm) = evaluate_samples(&model, &split.test, config.image_size, config.batch_size, None)?;
    let report = cm.compute()?;
    let doc = report_document(&report, SplitKind::Test, Some((evaluated, ck.epoch)));
    std::fs::write(&report_path, doc).map_err(|e| Error::io(&report_path, e))?;

    Ok(RunArtifacts {
        split_manifest: manifest_path,
        epoch_log: log_path,
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        test_report: report_path,
        records: outcome.records,
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        evaluated,
        report,
    })
}

fn snapshot_usize(snap: &toml::Table, key: &str, default: usize) -> usize {
    snap.get(key)
        .and_then(|v| v.as_integer())
        .and_then(|v| usize::try_from(v).ok())
        .unwrap_or(default)
}

/// Evaluates a checkpoint on one split of a manifest, in Eval mode without
/// augmentation.
pub fn run_eval(
    checkpoint_path: &Path,
    dataset_root: &Path,
    split: SplitKind,
    manifest_path: &Path,
) -> Result<MetricsReport> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let manifest = SplitManifest::read(manifest_path)?;
    if manifest.classes != ck.class_names {
        return Err(Error::Compatibility(format!(
            "checkpoint classes [{}] differ from manifest classes [{}]",
            ck.class_names.join(", "),
            manifest.classes.join(", ")
        )));
    }
    let assignment = manifest.to_assignment(dataset_root)?;
    let snap = ck.snapshot()?;
    let mut model: CustomCnn<f32> = ck.restore_model()?;
    model.set_mode(LayerMode::Eval);
    let (_, cm) = evaluate_samples(
        &model,
        assignment.get(split),
        snapshot_usize(&snap, "image_size", 224),
        snapshot_usize(&snap, "batch_size", 32),
        None,
    )?;
    cm.compute()
}

/// JSON document for a report produced by [`run_eval`].
pub fn eval_report_document(report: &MetricsReport, split: SplitKind) -> String {
    report_document(report, split, None)
}
