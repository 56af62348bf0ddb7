//! Seeded synthetic dataset generator for benchmarks and tests.
//!
//! Each class pairs a distinct dominant hue with a distinct stripe
//! orientation, plus per-image phase jitter and pixel noise, so color
//! histograms separate classes by hue and HOG/DAISY separate them by
//! texture.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{scan_dataset, DataError, DatasetManifest};
use crate::imgio::{save_png, ImageRGB};

fn image_seed(seed: u64, class: usize, sample: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((class as u64).to_le_bytes());
    hasher.update((sample as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest long enough"))
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = (h % 360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// One synthetic sample: class hue, class stripe angle, class stripe
/// period (flip- and rotation-invariant, so augmented models can still
/// tell flipped classes apart), seeded phase and noise. Deterministic
/// in `(class, sample, seed, size)`.
pub fn generate_image(class: usize, sample: usize, seed: u64, size: u32) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(seed, class, sample));
    let hue = class as f64 * 72.0;
    let (br, bg, bb) = hsv_to_rgb(hue, 0.85, 0.95);
    let angle = (class as f64 * 36.0).to_radians();
    let period = 8.0 + 3.0 * class as f64 + rng.gen_range(0.0..1.5);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dir_x, dir_y) = (angle.cos(), angle.sin());

    let mut pixels = Vec::with_capacity(size as usize * size as usize * 3);
    for y in 0..size {
        for x in 0..size {
            let t = (x as f64 * dir_x + y as f64 * dir_y) * std::f64::consts::TAU / period + phase;
            let stripe = 0.55 + 0.45 * t.sin();
            for base in [br, bg, bb] {
                let noise = rng.gen_range(-25.0..25.0);
                let v = base * stripe * 255.0 + noise;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRGB::from_raw(size, size, pixels)
}

/// Writes `classes x per_class` PNGs under
/// `root/class<u>/<year>/img<i>.png` (years cycle 2010..2014) and
/// returns the scanned manifest.
pub fn write_dataset(
    root: impl AsRef<Path>,
    classes: usize,
    per_class: usize,
    seed: u64,
    size: u32,
) -> Result<DatasetManifest, DataError> {
    let root = root.as_ref();
    for class in 0..classes {
        for sample in 0..per_class {
            let year = 2010 + sample % 5;
            let dir = root.join(format!("class{class}")).join(year.to_string());
            std::fs::create_dir_all(&dir).map_err(|e| DataError::Io {
                path: dir.display().to_string(),
                reason: e.to_string(),
            })?;
            let img = generate_image(class, sample, seed, size);
            let path = dir.join(format!("img{sample:03}.png"));
            save_png(&img, &path).map_err(|e| DataError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        }
    }
    Ok(scan_dataset(root)?.manifest)
}
