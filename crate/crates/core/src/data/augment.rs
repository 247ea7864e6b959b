//! Training-time augmentation on `[3, H, W]` RGB tensors in `[0, 1]`,
//! applied before normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub hflip_prob: f64,
    /// Rotation angle is drawn from `U(-rotation_deg, +rotation_deg)`.
    pub rotation_deg: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            hflip_prob: 0.5,
            rotation_deg: 10.0,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mags = [self.rotation_deg, self.brightness, self.contrast, self.saturation];
        if mags.iter().any(|m| !(*m >= 0.0) || !m.is_finite())
            || !(0.0..=1.0).contains(&self.hflip_prob)
            || self.brightness > 1.0
            || self.contrast > 1.0
            || self.saturation > 1.0
        {
            return Err(Error::Config(format!("invalid augmentation settings {self:?}")));
        }
        Ok(())
    }
}

fn dims(image: &Tensor<f32>) -> Result<(usize, usize)> {
    match *image.dims() {
        [3, h, w] => Ok((h, w)),
        _ => Err(Error::dim("augment", format!("expected [3, H, W], got {}", image.shape()))),
    }
}

#[inline]
fn gray(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn hflip(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (_, w) = dims(image)?;
    let mut out = image.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    Ok(out)
}

/// Rotates about the image center by `degrees` using inverse mapping with
/// bilinear sampling; source positions outside the image read as 0.
pub fn rotate(image: &Tensor<f32>, degrees: f64) -> Result<Tensor<f32>> {
    let (h, w) = dims(image)?;
    let theta = degrees.to_radians();
    let (sin, cos) = (theta.sin() as f32, theta.cos() as f32);
    let cx = (w as f32 - 1.0) / 2.0;
    let cy = (h as f32 - 1.0) / 2.0;
    let src = image.data();
    let mut out = vec![0.0f32; src.len()];
    let fetch = |plane: &[f32], y: isize, x: isize| -> f32 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for c in 0..3 {
                let plane = &src[c * h * w..(c + 1) * h * w];
                let top = fetch(plane, y0, x0) * (1.0 - fx) + fetch(plane, y0, x0 + 1) * fx;
                let bottom =
                    fetch(plane, y0 + 1, x0) * (1.0 - fx) + fetch(plane, y0 + 1, x0 + 1) * fx;
                out[c * h * w + y * w + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Tensor::from_vec(image.dims(), out)
}

pub fn adjust_brightness(image: &Tensor<f32>, factor: f32) -> Result<Tensor<f32>> {
    dims(image)?;
    Ok(image.map(|x| x * factor))
}

/// Blends every channel toward the mean gray level of the whole image.
pub fn adjust_contrast(image: &Tensor<f32>, factor: f32) -> Result<Tensor<f32>> {
    let (h, w) = dims(image)?;
    let n = h * w;
    let d = image.data();
    let mean = (0..n)
        .map(|i| gray(d[i], d[n + i], d[2 * n + i]) as f64)
        .sum::<f64>()
        / n as f64;
    let mean = mean as f32;
    Ok(image.map(|x| (x - mean) * factor + mean))
}

/// Blends every pixel toward its own gray level.
pub fn adjust_saturation(image: &Tensor<f32>, factor: f32) -> Result<Tensor<f32>> {
    let (h, w) = dims(image)?;
    let n = h * w;
    let mut out = image.clone();
    let d = out.data_mut();
    for i in 0..n {
        let g = gray(d[i], d[n + i], d[2 * n + i]);
        for c in 0..3 {
            d[c * n + i] = g + (d[c * n + i] - g) * factor;
        }
    }
    Ok(out)
}

/// Flip, rotate, then brightness/contrast/saturation jitter, clamped to `[0, 1]`.
///
/// All random draws happen whether or not a transform ends up applied, so the
/// stream position after a call depends only on the config.
pub fn augment<R: Rng + ?Sized>(
    image: &Tensor<f32>,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Tensor<f32>> {
    dims(image)?;
    if !config.enabled {
        return Ok(image.clone());
    }
    let flip = rng.random::<f64>() < config.hflip_prob;
    let angle = (rng.random::<f64>() * 2.0 - 1.0) * config.rotation_deg;
    let jitter = |rng: &mut R, mag: f64| (1.0 - mag + 2.0 * mag * rng.random::<f64>()) as f32;
    let u_brightness = jitter(rng, config.brightness);
    let u_contrast = jitter(rng, config.contrast);
    let u_saturation = jitter(rng, config.saturation);

    let mut img = if flip { hflip(image)? } else { image.clone() };
    if config.rotation_deg > 0.0 {
        img = rotate(&img, angle)?;
    }
    img = adjust_brightness(&img, u_brightness)?;
    img = adjust_contrast(&img, u_contrast)?;
    img = adjust_saturation(&img, u_saturation)?;
    Ok(img.map(|x| x.clamp(0.0, 1.0)))
}
