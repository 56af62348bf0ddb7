//! Histogram of oriented gradients.
//!
//! Centered-difference gradients with edge replication, per-cell
//! orientation voting with circular linear interpolation over the
//! unsigned 180-degree range, and overlapping block L2 normalization.

use crate::imgio::ImageGray;

use super::{FeatureConfig, FeatureError, FeatureKind, FeatureVector};

const NORM_EPS: f64 = 1e-6;

/// Centered differences `[-1, 0, 1]` in x and y with replicated edges.
/// Returns `(gx, gy)` row-major maps the size of the image.
pub fn gradient_field(img: &ImageGray) -> (Vec<f64>, Vec<f64>) {
    let w = img.width() as usize;
    let h = img.height() as usize;
    let px = img.pixels();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            gx[y * w + x] = px[y * w + right] - px[y * w + left];
            gy[y * w + x] = px[down * w + x] - px[up * w + x];
        }
    }
    (gx, gy)
}

/// Per-cell orientation histograms before any block normalization.
/// Cells are row-major; each holds `hog_orientations` bins. Every
/// pixel's magnitude is split linearly between the two nearest bin
/// centers, wrapping circularly over 180 degrees.
pub fn hog_cell_histograms(
    img: &ImageGray,
    cfg: &FeatureConfig,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    let cell = cfg.hog_cell;
    if !img.width().is_multiple_of(cell) || !img.height().is_multiple_of(cell) {
        return Err(FeatureError::DimensionNotDivisible(
            img.width(),
            img.height(),
            cell,
        ));
    }
    let w = img.width() as usize;
    let h = img.height() as usize;
    let cell = cell as usize;
    let cells_x = w / cell;
    let bins = cfg.hog_orientations as usize;
    let bin_width = 180.0 / bins as f64;

    let (gx, gy) = gradient_field(img);
    let mut hists = vec![vec![0.0f64; bins]; cells_x * (h / cell)];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy[i].atan2(gx[i]).to_degrees();
            if theta < 0.0 {
                theta += 180.0;
            }
            if theta >= 180.0 {
                theta -= 180.0;
            }
            let pos = theta / bin_width - 0.5;
            let (lo, hi, frac) = if pos < 0.0 {
                (bins - 1, 0, pos + 1.0)
            } else {
                let lo = pos.floor() as usize;
                ((lo) % bins, (lo + 1) % bins, pos - pos.floor())
            };
            let hist = &mut hists[(y / cell) * cells_x + x / cell];
            hist[lo] += mag * (1.0 - frac);
            hist[hi] += mag * frac;
        }
    }
    Ok(hists)
}

/// Full HOG descriptor: blocks of `hog_block`^2 cells slid with a
/// one-cell stride, each block L2-normalized with
/// `v -> v / sqrt(|v|^2 + eps^2)`.
pub fn hog(img: &ImageGray, cfg: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    let hists = hog_cell_histograms(img, cfg)?;
    let cell = cfg.hog_cell as usize;
    let cells_x = img.width() as usize / cell;
    let cells_y = img.height() as usize / cell;
    let block = cfg.hog_block as usize;
    let bins = cfg.hog_orientations as usize;
    if cells_x < block || cells_y < block {
        return Err(FeatureError::DimensionNotDivisible(
            img.width(),
            img.height(),
            (block * cell) as u32,
        ));
    }
    let blocks_x = cells_x - block + 1;
    let blocks_y = cells_y - block + 1;
    let block_len = block * block * bins;
    let mut values = Vec::with_capacity(blocks_x * blocks_y * block_len);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let start = values.len();
            for cy in 0..block {
                for cx in 0..block {
                    values.extend_from_slice(&hists[(by + cy) * cells_x + bx + cx]);
                }
            }
            let sumsq: f64 = values[start..].iter().map(|v| v * v).sum();
            let norm = (sumsq + NORM_EPS * NORM_EPS).sqrt();
            for v in &mut values[start..] {
                *v /= norm;
            }
        }
    }
    Ok(FeatureVector::new(FeatureKind::Hog, values))
}

/// Renders per-cell orientation histograms as a star plot, one
/// `star_side` square per cell, ray brightness proportional to the bin
/// weight. Diagnostic output only.
pub fn render_hog_cells(img: &ImageGray, cfg: &FeatureConfig, star_side: u32) -> ImageGray {
    let hists = hog_cell_histograms(img, cfg).unwrap_or_default();
    let cells_x = (img.width() / cfg.hog_cell) as usize;
    let cells_y = (img.height() / cfg.hog_cell) as usize;
    let side = star_side as usize;
    let out_w = cells_x * side;
    let out_h = cells_y * side;
    let mut canvas = vec![0.0f64; out_w * out_h];
    let peak = hists
        .iter()
        .flat_map(|h| h.iter())
        .cloned()
        .fold(0.0f64, f64::max);
    if peak > 0.0 {
        let bins = cfg.hog_orientations as usize;
        for cy in 0..cells_y {
            for cx in 0..cells_x {
                let hist = &hists[cy * cells_x + cx];
                let center_x = (cx * side) as f64 + side as f64 / 2.0;
                let center_y = (cy * side) as f64 + side as f64 / 2.0;
                for (b, &weight) in hist.iter().enumerate() {
                    if weight <= 0.0 {
                        continue;
                    }
                    // draw along the edge direction, perpendicular to
                    // the gradient orientation of the bin center
                    let theta = ((b as f64 + 0.5) * 180.0 / bins as f64 + 90.0).to_radians();
                    let brightness = weight / peak;
                    let reach = side as f64 / 2.0 - 0.5;
                    let steps = (side * 2) as i32;
                    for s in -steps..=steps {
                        let t = s as f64 / steps as f64 * reach;
                        let px = (center_x + t * theta.cos()).round();
                        let py = (center_y + t * theta.sin()).round();
                        if px >= 0.0 && py >= 0.0 && (px as usize) < out_w && (py as usize) < out_h
                        {
                            let idx = py as usize * out_w + px as usize;
                            canvas[idx] = canvas[idx].max(brightness);
                        }
                    }
                }
            }
        }
    }
    ImageGray::from_raw(out_w as u32, out_h as u32, canvas)
}
