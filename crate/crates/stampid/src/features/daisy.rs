//! Dense DAISY descriptor.
//!
//! Oriented gradient maps are rectified with `max(0, cos(angle_k -
//! angle))`, smoothed with per-ring Gaussians and sampled on concentric
//! rings around a regular grid. Each orientation sub-histogram is
//! L2-normalized independently.

use std::f64::consts::PI;

use crate::imgio::ImageGray;

use super::hog::gradient_field;
use super::{FeatureConfig, FeatureError, FeatureKind, FeatureVector};

const NORM_EPS: f64 = 1e-6;

/// Normalized 1-D Gaussian taps truncated at three standard deviations.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d as f64 * d as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with replicated edges.
fn gaussian_blur(map: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let sx = (x as i64 + t as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += k * map[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let sy = (y as i64 + t as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += k * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Grid positions along one axis: lattice with `step` spacing centered
/// inside the span where a sampling circle of `radius` stays in bounds.
fn grid_axis(len: u32, radius: u32, step: u32) -> Option<Vec<u32>> {
    if len <= 2 * radius {
        return None;
    }
    let span = len - 1 - 2 * radius;
    let count = span / step + 1;
    let offset = radius + (span - (count - 1) * step) / 2;
    Some((0..count).map(|i| offset + i * step).collect())
}

fn sample_nearest(map: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let sx = (x.round() as i64).clamp(0, w as i64 - 1) as usize;
    let sy = (y.round() as i64).clamp(0, h as i64 - 1) as usize;
    map[sy * w + sx]
}

/// Dense DAISY descriptor over the whole image; grid points are
/// concatenated row-major, each contributing
/// `daisy_orientations * (daisy_rings * daisy_histograms + 1)` values.
pub fn daisy(img: &ImageGray, cfg: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    let w = img.width() as usize;
    let h = img.height() as usize;
    let radius = cfg.daisy_radius;
    let (grid_x, grid_y) = match (
        grid_axis(img.width(), radius, cfg.daisy_step),
        grid_axis(img.height(), radius, cfg.daisy_step),
    ) {
        (Some(gx), Some(gy)) => (gx, gy),
        _ => {
            return Err(FeatureError::RadiusTooLarge {
                radius,
                width: img.width(),
                height: img.height(),
            })
        }
    };

    let orientations = cfg.daisy_orientations as usize;
    let rings = cfg.daisy_rings as usize;
    let hists = cfg.daisy_histograms as usize;

    let (gx, gy) = gradient_field(img);
    let mut maps = Vec::with_capacity(orientations);
    for k in 0..orientations {
        let theta_k = 2.0 * PI * k as f64 / orientations as f64;
        let map: Vec<f64> = (0..w * h)
            .map(|i| {
                let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
                if mag == 0.0 {
                    return 0.0;
                }
                let theta = gy[i].atan2(gx[i]);
                (theta_k - theta).cos().max(0.0) * mag
            })
            .collect();
        maps.push(map);
    }

    // level 0 is the center smoothing, levels 1..=rings the ring ones
    let ring_sigma =
        |r: usize| radius as f64 * (r as f64 + 1.0) / (2.0 * rings as f64);
    let mut levels = Vec::with_capacity(rings + 1);
    levels.push(ring_sigma(0) / 2.0);
    for r in 0..rings {
        levels.push(ring_sigma(r));
    }
    let smoothed: Vec<Vec<Vec<f64>>> = levels
        .iter()
        .map(|&sigma| maps.iter().map(|m| gaussian_blur(m, w, h, sigma)).collect())
        .collect();

    let point_dim = orientations * (rings * hists + 1);
    let mut values = Vec::with_capacity(grid_x.len() * grid_y.len() * point_dim);
    for &py in &grid_y {
        for &px in &grid_x {
            let start = values.len();
            for map in &smoothed[0] {
                values.push(map[py as usize * w + px as usize]);
            }
            for r in 0..rings {
                let ring_radius = radius as f64 * (r as f64 + 1.0) / rings as f64;
                for j in 0..hists {
                    let angle = 2.0 * PI * j as f64 / hists as f64;
                    let sx = px as f64 + ring_radius * angle.cos();
                    let sy = py as f64 + ring_radius * angle.sin();
                    for map in &smoothed[r + 1] {
                        values.push(sample_nearest(map, w, h, sx, sy));
                    }
                }
            }
            for sub in values[start..].chunks_mut(orientations) {
                let sumsq: f64 = sub.iter().map(|v| v * v).sum();
                let norm = (sumsq + NORM_EPS * NORM_EPS).sqrt();
                for v in sub {
                    *v /= norm;
                }
            }
        }
    }
    Ok(FeatureVector::new(FeatureKind::Daisy, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gray(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> ImageGray {
        let mut px = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                px.push(f(x, y));
            }
        }
        ImageGray::from_raw(width, height, px)
    }

    #[test]
    fn default_dims() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.daisy_point_dim(), 200);
        // 128px, radius 15, step 16: seven grid positions per axis
        assert_eq!(cfg.daisy_dim(), 7 * 7 * 200);
        let img = gray(128, 128, |x, y| ((x * 7 + y * 3) % 256) as f64 / 255.0);
        let fv = daisy(&img, &cfg).unwrap();
        assert_eq!(fv.dim(), cfg.daisy_dim());
    }

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let cfg = FeatureConfig::default();
        let img = gray(128, 128, |_, _| 0.6);
        let fv = daisy(&img, &cfg).unwrap();
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn radius_that_exits_the_image_is_rejected() {
        let cfg = FeatureConfig::default();
        let img = gray(20, 20, |x, _| x as f64 / 20.0);
        assert!(matches!(
            daisy(&img, &cfg).unwrap_err(),
            FeatureError::RadiusTooLarge { radius: 15, .. }
        ));
    }

    #[test]
    fn sub_histograms_have_unit_or_zero_norm() {
        let cfg = FeatureConfig::default();
        let img = gray(128, 128, |x, y| {
            0.5 + 0.5 * ((x as f64 * 0.37).sin() * (y as f64 * 0.23).cos())
        });
        let fv = daisy(&img, &cfg).unwrap();
        for sub in fv.values.chunks_exact(cfg.daisy_orientations as usize) {
            let norm = sub.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                norm == 0.0 || (norm - 1.0).abs() <= 1e-6,
                "sub-histogram norm {norm}"
            );
        }
    }

    /// Straight-line reimplementation: for every sample point the
    /// orientation vector is accumulated directly over the truncated
    /// Gaussian footprint (product of the two 1-D kernels, clamped
    /// reads) instead of smoothing whole maps first.
    #[test]
    fn single_grid_point_matches_brute_force() {
        let cfg = FeatureConfig {
            canonical_size: 48,
            daisy_step: 30,
            daisy_radius: 10,
            daisy_rings: 2,
            daisy_histograms: 6,
            daisy_orientations: 8,
            ..FeatureConfig::default()
        };
        let (w, h) = (48usize, 48usize);
        let img = gray(48, 48, |x, y| {
            let dx = x as f64 - 23.0;
            let dy = y as f64 - 23.0;
            0.5 + 0.5 * ((dx * dx + dy * dy).sqrt() / 3.0).sin()
        });
        let got = daisy(&img, &cfg).unwrap();
        assert_eq!(got.dim(), 8 * (2 * 6 + 1));

        // gradients, magnitudes and signed orientations, straight-line
        let px = img.pixels();
        let mut mag = vec![0.0; w * h];
        let mut theta = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let xl = px[y * w + x.saturating_sub(1)];
                let xr = px[y * w + (x + 1).min(w - 1)];
                let yu = px[y.saturating_sub(1) * w + x];
                let yd = px[(y + 1).min(h - 1) * w + x];
                let gx = xr - xl;
                let gy = yd - yu;
                mag[y * w + x] = (gx * gx + gy * gy).sqrt();
                theta[y * w + x] = gy.atan2(gx);
            }
        }
        let kernel = |sigma: f64| {
            let radius = (3.0 * sigma).ceil() as i64;
            let mut taps: Vec<f64> = (-radius..=radius)
                .map(|d| (-(d as f64 * d as f64) / (2.0 * sigma * sigma)).exp())
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            (taps, radius)
        };
        let accumulate = |cx: f64, cy: f64, sigma: f64| -> Vec<f64> {
            let sx = (cx.round() as i64).clamp(0, w as i64 - 1);
            let sy = (cy.round() as i64).clamp(0, h as i64 - 1);
            let (taps, radius) = kernel(sigma);
            let mut out = vec![0.0; 8];
            for (k, acc) in out.iter_mut().enumerate() {
                let theta_k = 2.0 * PI * k as f64 / 8.0;
                for dy in -radius..=radius {
                    let yy = (sy + dy).clamp(0, h as i64 - 1) as usize;
                    let wy = taps[(dy + radius) as usize];
                    for dx in -radius..=radius {
                        let xx = (sx + dx).clamp(0, w as i64 - 1) as usize;
                        let wx = taps[(dx + radius) as usize];
                        let i = yy * w + xx;
                        if mag[i] > 0.0 {
                            *acc += wy * wx * (theta_k - theta[i]).cos().max(0.0) * mag[i];
                        }
                    }
                }
            }
            out
        };

        let center = (23.0, 23.0);
        let sigma_ring = |r: usize| 10.0 * (r as f64 + 1.0) / 4.0;
        let mut expected = Vec::new();
        expected.extend(accumulate(center.0, center.1, sigma_ring(0) / 2.0));
        for r in 0..2usize {
            let ring_radius = 10.0 * (r as f64 + 1.0) / 2.0;
            for j in 0..6 {
                let angle = 2.0 * PI * j as f64 / 6.0;
                expected.extend(accumulate(
                    center.0 + ring_radius * angle.cos(),
                    center.1 + ring_radius * angle.sin(),
                    sigma_ring(r),
                ));
            }
        }
        for sub in expected.chunks_mut(8) {
            let norm = (sub.iter().map(|v| v * v).sum::<f64>() + 1e-12).sqrt();
            sub.iter_mut().for_each(|v| *v /= norm);
        }

        assert_eq!(got.values.len(), expected.len());
        for (g, e) in got.values.iter().zip(&expected) {
            assert_relative_eq!(g, e, epsilon = 1e-9);
        }
    }
}
