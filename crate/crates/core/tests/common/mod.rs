//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use customcnn::harness::TrainConfig;

/// Writes `per_class` solid-color `size`x`size` PNGs into each of
/// `root/red` and `root/blue`. Shades vary slightly per image.
pub fn write_color_dataset(root: &Path, per_class: usize, size: u32, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (class, base) in [("blue", [30u8, 40, 200]), ("red", [200u8, 40, 30])] {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let px = base.map(|c| c.saturating_add(rng.random_range(0..40)));
            let img = RgbImage::from_pixel(size, size, Rgb(px));
            img.save(dir.join(format!("{i:03}.png"))).unwrap();
        }
    }
}

/// Config for the 64-image overfit smoke run.
pub fn smoke_config(data: &Path, out: &Path) -> TrainConfig {
    TrainConfig {
        seed: 17,
        max_epochs: 200,
        image_size: 32,
        log_epoch_time: false,
        ..TrainConfig::new(data, out)
    }
}

pub mod gradcheck;
pub mod oracles;

/// Config for quick end-to-end runs on tiny 8x8 images.
pub fn tiny_config(data: &Path, out: &Path, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        seed: 3,
        max_epochs,
        image_size: 8,
        batch_size: 8,
        log_epoch_time: false,
        ..TrainConfig::new(data, out)
    }
}
