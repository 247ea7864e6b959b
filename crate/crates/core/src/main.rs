use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use customcnn::data::{scan_dataset, stratified_split, SplitKind, SplitManifest};
use customcnn::harness::{eval_report_document, run_eval, run_train, Checkpoint, TrainConfig};
use customcnn::model::size_mb;
use customcnn::Result;

/// Train, evaluate and inspect the compact CNN classifier.
///
/// Log verbosity follows RUST_LOG (default: info).
#[derive(Parser)]
#[command(name = "customcnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write all run artifacts to output_dir.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config key, e.g. --set max_epochs=20 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on one split of a manifest; prints a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitKind,
    },
    /// Write a stratified split manifest for a dataset.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print parameter count, buffer count, size and classes of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn with_commas(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            overrides,
        } => {
            let mut cfg = TrainConfig::load(&config, &overrides)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let run = run_train(&cfg)?;
            println!("epochs: {}", run.records.len());
            println!("best_epoch: {}", run.best_epoch);
            println!("stopped_early: {}", run.stopped_early);
            println!("evaluated: {}", run.evaluated.as_str());
            println!("test_accuracy: {:.4}", run.report.accuracy);
            println!("test_macro_f1: {:.4}", run.report.macro_f1);
            println!("output_dir: {}", cfg.output_dir.display());
        }
        Command::Eval {
            checkpoint,
            data,
            manifest,
            split,
        } => {
            let report = run_eval(&checkpoint, &data, split, &manifest)?;
            print!("{}", eval_report_document(&report, split));
        }
        Command::Split { data, seed, out } => {
            let index = scan_dataset(&data)?;
            let split = stratified_split(&index, seed)?;
            for w in &split.warnings {
                log::warn!("{w}");
            }
            let manifest = SplitManifest::from_assignment(&split);
            manifest.write(&out)?;
            println!(
                "train: {} val: {} test: {} sha256: {}",
                manifest.train.len(),
                manifest.val.len(),
                manifest.test.len(),
                manifest.hash()
            );
        }
        Command::Inspect { checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let (params, buffers) = (ck.param_count(), ck.buffer_count());
            println!("format_version: {}", customcnn::harness::FORMAT_VERSION);
            println!("params: {}", with_commas(params));
            println!("buffers: {}", with_commas(buffers));
            println!("size: {:.2} MB", size_mb(params, buffers));
            println!("epoch: {}", ck.epoch);
            println!("best_val_loss: {:.6}", ck.best_val_loss);
            println!("optimizer_state: {}", ck.optimizer.is_some());
            println!("classes ({}): {}", ck.num_classes(), ck.class_names.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
