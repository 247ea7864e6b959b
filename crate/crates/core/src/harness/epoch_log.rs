use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,lr,epoch_time_sec";

/// One completed epoch. `lr` is the rate in effect while the epoch trained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub epoch_time_sec: f64,
}

impl EpochRecord {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch,
            self.train_loss,
            self.train_acc,
            self.val_loss,
            self.val_acc,
            self.lr,
            self.epoch_time_sec
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "epoch log",
            detail,
        };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {} in '{line}'", fields.len())));
        }
        let epoch = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad epoch '{}'", fields[0])))?;
        let mut nums = [0.0; 6];
        for (slot, raw) in nums.iter_mut().zip(&fields[1..]) {
            *slot = raw.parse().map_err(|_| bad(format!("bad number '{raw}'")))?;
        }
        let [train_loss, train_acc, val_loss, val_acc, lr, epoch_time_sec] = nums;
        Ok(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            lr,
            epoch_time_sec,
        })
    }
}

/// Append-only CSV writer. Each record is flushed as it is written, so the
/// file is a valid log after a crash at any epoch boundary.
pub struct EpochLog {
    path: PathBuf,
    file: File,
}

impl EpochLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{EPOCH_LOG_HEADER}")
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(path, e))?;
        Ok(EpochLog {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Reopens an existing log for appending.
    pub fn append_to(path: &Path) -> Result<Self> {
        read_epoch_log(path)?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(EpochLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &EpochRecord) -> Result<()> {
        writeln!(self.file, "{}", record.to_csv_line())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == EPOCH_LOG_HEADER => {}
        Some(Err(e)) => return Err(Error::io(path, e)),
        _ => {
            return Err(Error::Format {
                what: "epoch log",
                detail: "missing header".into(),
            })
        }
    }
    lines
        .map(|l| l.map_err(|e| Error::io(path, e)).and_then(|l| EpochRecord::parse_csv_line(&l)))
        .collect()
}
