//! The CustomCNN classifier: three Conv-BN-ReLU blocks with max pooling,
//! global average pooling and a two-layer head.
//!
//! ```text
//! [N,3,H,W] -> B1 (2x conv 64)  -> pool -> B2 (2x conv 128) -> pool
//!           -> B3 (3x conv 256) -> pool -> GAP -> FC 256->512 -> BN1d
//!           -> ReLU -> Dropout -> FC 512->C
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    softmax_rows, BatchNorm, Conv2d, Dropout, GlobalAvgPool, HasParams, LayerMode, Linear,
    MaxPool2d, Param, Relu,
};
use crate::rng::{stream, tag};
use crate::scalar::Scalar;
use crate::tensor::{global_avg_pool_forward, maxpool2d_forward, Tensor};

pub const REFERENCE_BLOCK_DEPTHS: [usize; 3] = [2, 2, 3];
pub const REFERENCE_CHANNELS: [usize; 3] = [64, 128, 256];
pub const REFERENCE_HIDDEN: usize = 512;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomCnnConfig {
    pub num_classes: usize,
    pub input_channels: usize,
    pub block_depths: Vec<usize>,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub dropout_rate: f64,
}

impl CustomCnnConfig {
    pub fn reference(num_classes: usize) -> Self {
        CustomCnnConfig {
            num_classes,
            input_channels: 3,
            block_depths: REFERENCE_BLOCK_DEPTHS.to_vec(),
            channels: REFERENCE_CHANNELS.to_vec(),
            hidden: REFERENCE_HIDDEN,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }

    /// False once any architectural constant has been overridden.
    pub fn is_reference(&self) -> bool {
        self.input_channels == 3
            && self.block_depths == REFERENCE_BLOCK_DEPTHS
            && self.channels == REFERENCE_CHANNELS
            && self.hidden == REFERENCE_HIDDEN
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.block_depths.is_empty() || self.block_depths.len() != self.channels.len() {
            return Err(Error::Config(
                "block_depths and channels must be non-empty and equally long".into(),
            ));
        }
        if self.block_depths.contains(&0)
            || self.channels.contains(&0)
            || self.hidden == 0
            || self.input_channels == 0
        {
            return Err(Error::Config("architecture sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Spatial dims must be divisible by this (one halving per block).
    pub fn spatial_divisor(&self) -> usize {
        1 << self.block_depths.len()
    }
}

#[derive(Clone, Debug)]
struct ConvUnit<T> {
    conv: Conv2d<T>,
    bn: BatchNorm<T>,
    relu: Relu,
}

#[derive(Clone, Debug)]
struct ConvBlock<T> {
    units: Vec<ConvUnit<T>>,
    pool: MaxPool2d,
}

#[derive(Clone, Debug)]
pub struct CustomCnn<T> {
    config: CustomCnnConfig,
    blocks: Vec<ConvBlock<T>>,
    gap: GlobalAvgPool,
    fc1: Linear<T>,
    bn: BatchNorm<T>,
    relu: Relu,
    dropout: Dropout<T>,
    fc2: Linear<T>,
    mode: LayerMode,
    cached: bool,
}

impl<T: Scalar> CustomCnn<T> {
    /// Allocates the layer stack with zero weights (BatchNorm at identity).
    pub fn new_zeroed(config: CustomCnnConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.block_depths.len());
        let mut in_c = config.input_channels;
        for (&depth, &out_c) in config.block_depths.iter().zip(&config.channels) {
            let mut units = Vec::with_capacity(depth);
            for _ in 0..depth {
                units.push(ConvUnit {
                    conv: Conv2d::new(in_c, out_c, 3, 1, 1)?,
                    bn: BatchNorm::new(out_c)?,
                    relu: Relu::new(),
                });
                in_c = out_c;
            }
            blocks.push(ConvBlock {
                units,
                pool: MaxPool2d::new(),
            });
        }
        Ok(CustomCnn {
            fc1: Linear::new(in_c, config.hidden)?,
            bn: BatchNorm::new(config.hidden)?,
            relu: Relu::new(),
            dropout: Dropout::new(config.dropout_rate)?,
            fc2: Linear::new(config.hidden, config.num_classes)?,
            gap: GlobalAvgPool::new(),
            blocks,
            config,
            mode: LayerMode::Train,
            cached: false,
        })
    }

    /// Builds and initializes the model in Train mode.
    ///
    /// Conv weights are He-normal (fan-out), linear weights `N(0, 0.01)`,
    /// biases zero, BatchNorm `gamma = 1`, `beta = 0`. Same seed, same bits.
    pub fn build(config: CustomCnnConfig, seed: u64) -> Result<Self> {
        let mut model = Self::new_zeroed(config)?;
        let mut rng = stream(seed, &[tag::INIT]);
        for block in &mut model.blocks {
            for unit in &mut block.units {
                unit.conv.init_he(&mut rng)?;
            }
        }
        model.fc1.init_gaussian(&mut rng)?;
        model.fc2.init_gaussian(&mut rng)?;
        Ok(model)
    }

    pub fn config(&self) -> &CustomCnnConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn mode(&self) -> LayerMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: LayerMode) {
        self.mode = mode;
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = input.dims4("custom_cnn")?;
        if c != self.config.input_channels {
            return Err(Error::dim(
                "custom_cnn",
                format!("input has {c} channels, model expects {}", self.config.input_channels),
            ));
        }
        let d = self.config.spatial_divisor();
        if h % d != 0 || w % d != 0 {
            return Err(Error::Precondition(format!(
                "input spatial dims {h}x{w} must be divisible by {d}"
            )));
        }
        Ok(())
    }

    /// Feature map after the last block, before global pooling (Eval semantics).
    pub fn extract_features(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for block in &self.blocks {
            for unit in &block.units {
                x = unit.conv.infer(&x)?;
                x = unit.bn.infer(&x)?;
                x = x.map(|v| if v > T::zero() { v } else { T::zero() });
            }
            x = maxpool2d_forward(&x)?.0;
        }
        Ok(x)
    }

    /// Eval-mode logits without touching any cached state.
    pub fn predict_logits(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let features = self.extract_features(input)?;
        let z = global_avg_pool_forward(&features)?;
        let h = self.fc1.infer(&z)?;
        let h = self.bn.infer(&h)?;
        let h = h.map(|v| if v > T::zero() { v } else { T::zero() });
        self.fc2.infer(&h)
    }

    /// Class probabilities for inference consumers.
    pub fn predict_proba(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        softmax_rows(&self.predict_logits(input)?)
    }

    /// Forward pass in the current mode. Train mode caches activations for
    /// [`CustomCnn::backward`] and draws dropout masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(&mut self, input: &Tensor<T>, rng: &mut R) -> Result<Tensor<T>> {
        self.cached = false;
        if self.mode == LayerMode::Eval {
            self.clear_caches();
            return self.predict_logits(input);
        }
        self.check_input(input)?;
        let mode = self.mode;
        let mut x = input.clone();
        for block in &mut self.blocks {
            for unit in &mut block.units {
                x = unit.conv.forward(&x, mode)?;
                x = unit.bn.forward(&x, mode)?;
                x = unit.relu.forward(&x, mode);
            }
            x = block.pool.forward(&x, mode)?;
        }
        let z = self.gap.forward(&x)?;
        let h = self.fc1.forward(&z, mode)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.relu.forward(&h, mode);
        let h = self.dropout.forward(&h, mode, rng)?;
        let logits = self.fc2.forward(&h, mode)?;
        self.cached = true;
        Ok(logits)
    }

    /// Accumulates the loss gradient into every parameter's `grad`.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        if !self.cached {
            return Err(Error::State(
                "backward requires a preceding train-mode forward".into(),
            ));
        }
        let g = self.fc2.backward(grad_logits)?;
        let g = self.dropout.backward(&g)?;
        let g = self.relu.backward(&g)?;
        let g = self.bn.backward(&g)?;
        let g = self.fc1.backward(&g)?;
        let mut g = self.gap.backward(&g)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.pool.backward(&g)?;
            for unit in block.units.iter_mut().rev() {
                g = unit.relu.backward(&g)?;
                g = unit.bn.backward(&g)?;
                g = unit.conv.backward(&g)?;
            }
        }
        Ok(())
    }

    /// Drops cached activations (frees memory between phases).
    pub fn clear_caches(&mut self) {
        for block in &mut self.blocks {
            for unit in &mut block.units {
                unit.conv.clear_cache();
                unit.bn.clear_cache();
                unit.relu.clear_cache();
            }
            block.pool.clear_cache();
        }
        self.gap.clear_cache();
        self.fc1.clear_cache();
        self.bn.clear_cache();
        self.relu.clear_cache();
        self.dropout.clear_cache();
        self.fc2.clear_cache();
        self.cached = false;
    }

    /// Non-learnable persistent tensors (BatchNorm running statistics).
    pub fn visit_buffers(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (b, block) in self.blocks.iter().enumerate() {
            for (u, unit) in block.units.iter().enumerate() {
                let prefix = format!("block{}.bn{}", b + 1, u + 1);
                f(&format!("{prefix}.running_mean"), &unit.bn.running_mean);
                f(&format!("{prefix}.running_var"), &unit.bn.running_var);
            }
        }
        f("head.bn.running_mean", &self.bn.running_mean);
        f("head.bn.running_var", &self.bn.running_var);
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (u, unit) in block.units.iter_mut().enumerate() {
                let prefix = format!("block{}.bn{}", b + 1, u + 1);
                f(&format!("{prefix}.running_mean"), &mut unit.bn.running_mean);
                f(&format!("{prefix}.running_var"), &mut unit.bn.running_var);
            }
        }
        f("head.bn.running_mean", &mut self.bn.running_mean);
        f("head.bn.running_var", &mut self.bn.running_var);
    }

    pub fn buffer_count(&self) -> usize {
        let mut total = 0;
        self.visit_buffers(&mut |_, t| total += t.numel());
        total
    }

    /// Storage in bytes at 32-bit precision, parameters plus buffers.
    pub fn model_size_bytes(&self) -> usize {
        4 * (self.param_count() + self.buffer_count())
    }

    /// Model size in MiB, rounded to two decimals.
    pub fn model_size_mb(&self) -> f64 {
        size_mb(self.param_count(), self.buffer_count())
    }

    /// Parameter names in registry order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |n, _| names.push(n.to_string()));
        names
    }

    /// Copies every parameter value and buffer into a model of another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<CustomCnn<U>> {
        let mut out = CustomCnn::<U>::new_zeroed(self.config.clone())?;
        let mut values = Vec::new();
        self.visit_params(&mut |_, p| values.push(p.value.cast::<U>()));
        let mut it = values.into_iter();
        out.visit_params_mut(&mut |_, p| {
            if let Some(v) = it.next() {
                p.value = v;
            }
        });
        let mut bufs = Vec::new();
        self.visit_buffers(&mut |_, t| bufs.push(t.cast::<U>()));
        let mut it = bufs.into_iter();
        out.visit_buffers_mut(&mut |_, t| {
            if let Some(v) = it.next() {
                *t = v;
            }
        });
        out.mode = self.mode;
        Ok(out)
    }
}

/// `4 * (params + buffers) / 2^20`, rounded to two decimals.
pub fn size_mb(params: usize, buffers: usize) -> f64 {
    let mb = 4.0 * (params + buffers) as f64 / (1u64 << 20) as f64;
    (mb * 100.0).round() / 100.0
}

impl<T: Scalar> HasParams<T> for CustomCnn<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (b, block) in self.blocks.iter().enumerate() {
            for (u, unit) in block.units.iter().enumerate() {
                let (b, u) = (b + 1, u + 1);
                f(&format!("block{b}.conv{u}.weight"), &unit.conv.weight);
                f(&format!("block{b}.conv{u}.bias"), &unit.conv.bias);
                f(&format!("block{b}.bn{u}.gamma"), &unit.bn.gamma);
                f(&format!("block{b}.bn{u}.beta"), &unit.bn.beta);
            }
        }
        f("head.fc1.weight", &self.fc1.weight);
        f("head.fc1.bias", &self.fc1.bias);
        f("head.bn.gamma", &self.bn.gamma);
        f("head.bn.beta", &self.bn.beta);
        f("head.fc2.weight", &self.fc2.weight);
        f("head.fc2.bias", &self.fc2.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (u, unit) in block.units.iter_mut().enumerate() {
                let (b, u) = (b + 1, u + 1);
                f(&format!("block{b}.conv{u}.weight"), &mut unit.conv.weight);
                f(&format!("block{b}.conv{u}.bias"), &mut unit.conv.bias);
                f(&format!("block{b}.bn{u}.gamma"), &mut unit.bn.gamma);
                f(&format!("block{b}.bn{u}.beta"), &mut unit.bn.beta);
            }
        }
        f("head.fc1.weight", &mut self.fc1.weight);
        f("head.fc1.bias", &mut self.fc1.bias);
        f("head.bn.gamma", &mut self.bn.gamma);
        f("head.bn.beta", &mut self.bn.beta);
        f("head.fc2.weight", &mut self.fc2.weight);
        f("head.fc2.bias", &mut self.fc2.bias);
    }
}
