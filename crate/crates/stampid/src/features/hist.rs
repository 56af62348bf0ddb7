//! Per-channel color histogram descriptor.

use crate::imgio::ImageRGB;

use super::{FeatureConfig, FeatureKind, FeatureVector};

/// Bins each channel independently into `hist_bins` buckets
/// (`bin = v * B / 256`) and normalizes so every channel sub-histogram
/// sums to 1. Layout is `[R-hist, G-hist, B-hist]`.
pub fn color_histogram(img: &ImageRGB, cfg: &FeatureConfig) -> FeatureVector {
    let bins = cfg.hist_bins as usize;
    let mut counts = vec![0u64; 3 * bins];
    for px in img.pixels().chunks_exact(3) {
        for (c, &v) in px.iter().enumerate() {
            let bin = v as usize * bins / 256;
            counts[c * bins + bin] += 1;
        }
    }
    let total = (img.width() as usize * img.height() as usize) as f64;
    let values = counts.iter().map(|&c| c as f64 / total).collect();
    FeatureVector::new(FeatureKind::Hist, values)
}
