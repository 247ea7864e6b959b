use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

use super::{augment, decode_rgb, normalize, resize_bilinear, AugmentConfig, SampleRef};

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub shuffle: bool,
    /// Applied per sample before normalization; `None` for val/test.
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
    pub image_size: usize,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub targets: Vec<usize>,
    /// Positions of the samples within the split.
    pub indices: Vec<usize>,
}

/// Sample order for one epoch, chunked into batches. The last batch may be short.
pub fn plan_batches(
    len: usize,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        rng::shuffle(&mut order, &mut rng::stream(seed, &[tag::SHUFFLE, epoch as u64]));
    }
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

pub struct BatchIter<'a> {
    samples: &'a [SampleRef],
    options: BatchOptions,
    epoch: usize,
    plan: std::vec::IntoIter<Vec<usize>>,
}

impl BatchIter<'_> {
    fn load(&self, position: usize) -> Result<Tensor<f32>> {
        let sample = &self.samples[position];
        let raw = decode_rgb(&sample.path)?;
        let mut img = resize_bilinear(&raw, self.options.image_size, self.options.image_size)?;
        if let Some(cfg) = &self.options.augment {
            let mut rng = rng::stream(
                self.options.seed,
                &[tag::AUGMENT, self.epoch as u64, position as u64],
            );
            img = augment(&img, cfg, &mut rng)?;
        }
        normalize(&mut img)?;
        Ok(img)
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.len() == 0
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        let indices = self.plan.next()?;
        let s = self.options.image_size;
        let mut data = Vec::with_capacity(indices.len() * 3 * s * s);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in &indices {
            match self.load(i) {
                Ok(img) => data.extend_from_slice(img.data()),
                Err(e) => return Some(Err(e)),
            }
            targets.push(self.samples[i].class_index);
        }
        Some(Tensor::from_vec(&[indices.len(), 3, s, s], data).map(|images| Batch {
            images,
            targets,
            indices,
        }))
    }
}

/// Lazily loads the batches of one epoch. An empty split yields nothing.
pub fn make_batches<'a>(
    samples: &'a [SampleRef],
    options: &BatchOptions,
    epoch: usize,
) -> Result<BatchIter<'a>> {
    if options.image_size == 0 {
        return Err(Error::Config("image_size must be positive".into()));
    }
    let plan = plan_batches(
        samples.len(),
        options.batch_size,
        options.shuffle,
        options.seed,
        epoch,
    )?;
    Ok(BatchIter {
        samples,
        options: options.clone(),
        epoch,
        plan: plan.into_iter(),
    })
}
