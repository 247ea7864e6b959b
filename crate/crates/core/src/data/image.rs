//! Decoding, resizing and ImageNet normalization.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Decodes an image file to a `[3, H, W]` RGB tensor with values in `[0, 1]`.
pub fn decode_rgb(path: &Path) -> Result<Tensor<f32>> {
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| decode_err(e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(decode_err("image has zero size".into()));
    }
    let mut data = vec![0.0f32; 3 * h * w];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px.0[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Bilinear resampling with half-pixel centers; a same-size call is an exact copy.
pub fn resize_bilinear(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let [c, h, w] = *image.dims() else {
        return Err(Error::dim("resize_bilinear", format!("expected [C, H, W], got {}", image.shape())));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::Precondition("resize target must be non-empty".into()));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(image.clone());
    }
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let src = image.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Per-channel `(x - mean) / std` in place.
pub fn normalize(image: &mut Tensor<f32>) -> Result<()> {
    per_channel(image, |x, c| (x - IMAGENET_MEAN[c]) / IMAGENET_STD[c])
}

/// Inverse of [`normalize`].
pub fn denormalize(image: &mut Tensor<f32>) -> Result<()> {
    per_channel(image, |x, c| x * IMAGENET_STD[c] + IMAGENET_MEAN[c])
}

fn per_channel(image: &mut Tensor<f32>, f: impl Fn(f32, usize) -> f32) -> Result<()> {
    let [3, h, w] = *image.dims() else {
        return Err(Error::dim("normalize", format!("expected [3, H, W], got {}", image.shape())));
    };
    for (c, plane) in image.data_mut().chunks_exact_mut(h * w).enumerate() {
        plane.iter_mut().for_each(|x| *x = f(*x, c));
    }
    Ok(())
}

/// Decode, resize to `target x target`, normalize.
pub fn load_and_preprocess(path: &Path, target: usize) -> Result<Tensor<f32>> {
    let img = decode_rgb(path)?;
    let mut img = resize_bilinear(&img, target, target)?;
    normalize(&mut img)?;
    Ok(img)
}
