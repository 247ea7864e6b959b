//! Binary checkpoint format.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "CCNN"                      magic
//! u32                         format version
//! u32 + names                 class count, then each name as u32 length + UTF-8
//! u32 + text                  config snapshot (TOML)
//! f64                         best validation loss
//! u64                         epoch the weights were taken at
//! table                       parameters
//! table                       buffers
//! u8                          optimizer present (0 or 1)
//!   u64, 5 x f64              step, lr, beta1, beta2, eps, weight_decay
//!   table, table              first and second moments, keyed like the parameters
//! u32                         CRC-32 of every preceding byte
//! ```
//!
//! A table is a u32 count followed by entries of (u32 name length, name,
//! u32 rank, rank x u64 dims, f32 data).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CustomCnn, CustomCnnConfig};
use crate::nn::HasParams;
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CCNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moments: Vec<NamedTensor>,
    pub second_moments: Vec<NamedTensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub class_names: Vec<String>,
    /// TOML text; the `model` table holds the architecture.
    pub config_snapshot: String,
    pub best_val_loss: f64,
    pub epoch: u64,
    pub params: Vec<NamedTensor>,
    pub buffers: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerState>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn named<T: Scalar>(name: &str, t: &Tensor<T>) -> NamedTensor {
    NamedTensor {
        name: name.to_string(),
        tensor: t.cast(),
    }
}

impl Checkpoint {
    /// Snapshots `model` (and the Adam moments stored on its parameters when
    /// `optimizer` is given). `settings` is extended with the model config.
    pub fn capture<T: Scalar>(
        model: &CustomCnn<T>,
        class_names: &[String],
        mut settings: toml::Table,
        optimizer: Option<&Adam>,
        best_val_loss: f64,
        epoch: u64,
    ) -> Result<Self> {
        if class_names.len() != model.num_classes() {
            return Err(Error::Compatibility(format!(
                "{} class names for a {}-class model",
                class_names.len(),
                model.num_classes()
            )));
        }
        let model_table = toml::Table::try_from(model.config())
            .map_err(|e| Error::Internal(format!("model config does not serialize: {e}")))?;
        settings.insert("model".into(), toml::Value::Table(model_table));

        let mut params = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        model.visit_params(&mut |n, p| {
            params.push(named(n, &p.value));
            if optimizer.is_some() {
                first.push(named(n, &p.adam_m));
                second.push(named(n, &p.adam_v));
            }
        });
        let mut buffers = Vec::new();
        model.visit_buffers(&mut |n, t| buffers.push(named(n, t)));

        Ok(Checkpoint {
            class_names: class_names.to_vec(),
            config_snapshot: toml::to_string(&settings)
                .map_err(|e| Error::Internal(format!("snapshot does not serialize: {e}")))?,
            best_val_loss,
            epoch,
            params,
            buffers,
            optimizer: optimizer.map(|adam| OptimizerState {
                config: *adam.config(),
                step: adam.step_count(),
                first_moments: first,
                second_moments: second,
            }),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn snapshot(&self) -> Result<toml::Table> {
        self.config_snapshot
            .parse()
            .map_err(|e| corrupt(format!("config snapshot is not valid TOML: {e}")))
    }

    pub fn model_config(&self) -> Result<CustomCnnConfig> {
        let mut snap = self.snapshot()?;
        let table = snap
            .remove("model")
            .ok_or_else(|| corrupt("config snapshot has no model table"))?;
        table
            .try_into()
            .map_err(|e| corrupt(format!("model config in snapshot: {e}")))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.tensor.numel()).sum()
    }

    pub fn buffer_count(&self) -> usize {
        self.buffers.iter().map(|t| t.tensor.numel()).sum()
    }

    /// Rebuilds the model. Names and shapes must match the registry exactly.
    pub fn restore_model<T: Scalar>(&self) -> Result<CustomCnn<T>> {
        let config = self.model_config()?;
        if config.num_classes != self.num_classes() {
            return Err(corrupt(format!(
                "model has {} classes but {} names are stored",
                config.num_classes,
                self.num_classes()
            )));
        }
        let mut model = CustomCnn::<T>::new_zeroed(config)
            .map_err(|e| corrupt(format!("stored model config is invalid: {e}")))?;
        let mut it = self.params.iter();
        let mut err = None;
        model.visit_params_mut(&mut |name, p| {
            if err.is_none() {
                err = load_into(it.next(), name, &mut p.value).err();
            }
        });
        check_exhausted(err, it.next(), "parameter")?;

        let mut it = self.buffers.iter();
        let mut err = None;
        model.visit_buffers_mut(&mut |name, t| {
            if err.is_none() {
                err = load_into(it.next(), name, t).err();
            }
        });
        check_exhausted(err, it.next(), "buffer")?;
        Ok(model)
    }

    /// Writes the stored moments into `model` and returns the optimizer, or
    /// `None` when the checkpoint has no optimizer section.
    pub fn restore_optimizer<T: Scalar>(&self, model: &mut CustomCnn<T>) -> Result<Option<Adam>> {
        let Some(state) = &self.optimizer else {
            return Ok(None);
        };
        let mut m = state.first_moments.iter();
        let mut v = state.second_moments.iter();
        let mut err = None;
        model.visit_params_mut(&mut |name, p| {
            if err.is_none() {
                err = load_into(m.next(), name, &mut p.adam_m)
                    .and_then(|_| load_into(v.next(), name, &mut p.adam_v))
                    .err();
            }
        });
        check_exhausted(err, m.next().or(v.next()), "moment")?;
        let adam = Adam::with_step(state.config, state.step)
            .map_err(|e| corrupt(format!("stored optimizer config: {e}")))?;
        Ok(Some(adam))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.class_names.len() as u32);
        for name in &self.class_names {
            w.str(name);
        }
        w.str(&self.config_snapshot);
        w.f64(self.best_val_loss);
        w.u64(self.epoch);
        w.table(&self.params);
        w.table(&self.buffers);
        match &self.optimizer {
            None => w.0.push(0),
            Some(state) => {
                w.0.push(1);
                w.u64(state.step);
                let c = &state.config;
                for x in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
                    w.f64(x);
                }
                w.table(&state.first_moments);
                w.table(&state.second_moments);
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(corrupt(format!("truncated: only {} bytes", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch (file damaged or truncated)"));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let classes = r.u32()? as usize;
        let class_names = (0..classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let config_snapshot = r.str()?;
        let best_val_loss = r.f64()?;
        let epoch = r.u64()?;
        let params = r.table()?;
        let buffers = r.table()?;
        let optimizer = match r.bytes(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let config = AdamConfig {
                    lr: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                    weight_decay: r.f64()?,
                };
                Some(OptimizerState {
                    config,
                    step,
                    first_moments: r.table()?,
                    second_moments: r.table()?,
                })
            }
            flag => return Err(corrupt(format!("invalid optimizer flag {flag}"))),
        };
        if r.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Checkpoint {
            class_names,
            config_snapshot,
            best_val_loss,
            epoch,
            params,
            buffers,
            optimizer,
        })
    }

    /// Writes through a temporary file and renames, so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let result = std::fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(&self.to_bytes())?;
            f.sync_all()
        });
        if let Err(e) = result.and_then(|_| std::fs::rename(&tmp, path)) {
            let _ = std::fs::remove_file(&tmp);
            return Err(Error::io(path, e));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn load_into<T: Scalar>(entry: Option<&NamedTensor>, name: &str, dst: &mut Tensor<T>) -> Result<()> {
    let entry = entry.ok_or_else(|| corrupt(format!("missing tensor '{name}'")))?;
    if entry.name != name {
        return Err(corrupt(format!("expected tensor '{name}', found '{}'", entry.name)));
    }
    if entry.tensor.dims() != dst.dims() {
        return Err(corrupt(format!(
            "tensor '{name}' has shape {}, model expects {}",
            entry.tensor.shape(),
            dst.shape()
        )));
    }
    *dst = entry.tensor.cast();
    Ok(())
}

fn check_exhausted(err: Option<Error>, extra: Option<&NamedTensor>, what: &str) -> Result<()> {
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(t) = extra {
        return Err(corrupt(format!("unexpected {what} tensor '{}'", t.name)));
    }
    Ok(())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn table(&mut self, entries: &[NamedTensor]) {
        self.u32(entries.len() as u32);
        for e in entries {
            self.str(&e.name);
            self.u32(e.tensor.dims().len() as u32);
            for &d in e.tensor.dims() {
                self.u64(d as u64);
            }
            for &x in e.tensor.data() {
                self.0.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.bytes(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn table(&mut self) -> Result<Vec<NamedTensor>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = self.str()?;
            let rank = self.u32()? as usize;
            let dims = (0..rank)
                .map(|_| self.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| corrupt(format!("tensor '{name}' is too large")))?;
            let data = self
                .bytes(numel)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let tensor = Tensor::from_vec(&dims, data)
                .map_err(|e| corrupt(format!("tensor '{name}': {e}")))?;
            out.push(NamedTensor { name, tensor });
        }
        Ok(out)
    }
}
