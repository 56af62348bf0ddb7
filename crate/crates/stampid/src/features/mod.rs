//! Fixed-length image descriptors: color histogram, HOG, DAISY and
//! their concatenation.
//!
//! Every extractor is a pure function of the image and the
//! [`FeatureConfig`], so identical input bytes always produce
//! bit-identical descriptors.

mod daisy;
mod hist;
mod hog;

pub use daisy::daisy;
pub use hist::color_histogram;
pub use hog::{gradient_field, hog, hog_cell_histograms, render_hog_cells};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imgio::{resize_bilinear_rgb, to_grayscale, ImageError, ImageRGB};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {0}x{1} is not divisible into {2}-pixel cells")]
    DimensionNotDivisible(u32, u32, u32),
    #[error("sampling radius {radius} does not fit inside a {width}x{height} image")]
    RadiusTooLarge { radius: u32, width: u32, height: u32 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Which descriptor a [`FeatureVector`] carries. `All` is the
/// concatenation of the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Hist,
    Hog,
    Daisy,
    All,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Hist => "hist",
            FeatureKind::Hog => "hog",
            FeatureKind::Daisy => "daisy",
            FeatureKind::All => "all",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hist" => Ok(FeatureKind::Hist),
            "hog" => Ok(FeatureKind::Hog),
            "daisy" => Ok(FeatureKind::Daisy),
            "all" => Ok(FeatureKind::All),
            other => Err(format!("unknown feature kind: {other}")),
        }
    }
}

/// Extractor parameters. Dimensions of every descriptor are a pure
/// function of this struct, so equal configs always yield equal dims.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Side length every image is resized to before extraction.
    pub canonical_size: u32,
    /// Histogram buckets per color channel.
    pub hist_bins: u32,
    /// Cell side in pixels; must divide `canonical_size`.
    pub hog_cell: u32,
    /// Block side in cells, slid with a one-cell stride.
    pub hog_block: u32,
    /// Unsigned orientation bins over 180 degrees.
    pub hog_orientations: u32,
    /// Grid spacing between descriptor centers, in pixels.
    pub daisy_step: u32,
    /// Radius of the outermost sampling ring, in pixels.
    pub daisy_radius: u32,
    /// Concentric sampling rings around each grid point.
    pub daisy_rings: u32,
    /// Sample points per ring.
    pub daisy_histograms: u32,
    /// Signed orientation maps over 360 degrees.
    pub daisy_orientations: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            canonical_size: 128,
            hist_bins: 32,
            hog_cell: 8,
            hog_block: 2,
            hog_orientations: 9,
            daisy_step: 16,
            daisy_radius: 15,
            daisy_rings: 3,
            daisy_histograms: 8,
            daisy_orientations: 8,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let counts = [
            self.canonical_size,
            self.hist_bins,
            self.hog_cell,
            self.hog_block,
            self.hog_orientations,
            self.daisy_step,
            self.daisy_radius,
            self.daisy_rings,
            self.daisy_histograms,
            self.daisy_orientations,
        ];
        if counts.contains(&0) {
            return Err(FeatureError::InvalidConfig(
                "all counts must be >= 1".into(),
            ));
        }
        if !self.canonical_size.is_multiple_of(self.hog_cell) {
            return Err(FeatureError::InvalidConfig(format!(
                "canonical size {} not divisible by cell size {}",
                self.canonical_size, self.hog_cell
            )));
        }
        if self.daisy_radius * 2 >= self.canonical_size {
            return Err(FeatureError::InvalidConfig(format!(
                "sampling radius {} must be < half the canonical size {}",
                self.daisy_radius, self.canonical_size
            )));
        }
        Ok(())
    }

    /// SHA-256 over the serialized config, used to tie models to the
    /// exact extractor parameters they were trained with.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn hist_dim(&self) -> usize {
        3 * self.hist_bins as usize
    }

    pub fn hog_dim(&self) -> usize {
        let cells = (self.canonical_size / self.hog_cell) as usize;
        let block = self.hog_block as usize;
        if cells < block {
            return 0;
        }
        let blocks = cells - block + 1;
        blocks * blocks * block * block * self.hog_orientations as usize
    }

    pub fn daisy_dim(&self) -> usize {
        let side = self.canonical_size;
        let span = side.saturating_sub(1).saturating_sub(2 * self.daisy_radius);
        if side <= 2 * self.daisy_radius {
            return 0;
        }
        let points = (span / self.daisy_step + 1) as usize;
        points * points * self.daisy_point_dim()
    }

    /// Descriptor length contributed by a single grid point.
    pub fn daisy_point_dim(&self) -> usize {
        self.daisy_orientations as usize
            * (self.daisy_rings as usize * self.daisy_histograms as usize + 1)
    }

    pub fn dim(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Hist => self.hist_dim(),
            FeatureKind::Hog => self.hog_dim(),
            FeatureKind::Daisy => self.daisy_dim(),
            FeatureKind::All => self.hist_dim() + self.hog_dim() + self.daisy_dim(),
        }
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// A fixed-length real descriptor tagged with the extractor that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { kind, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// L2-normalizes each part independently (zero vectors pass through),
/// then concatenates them in the given order.
pub fn concat_features(parts: &[FeatureVector]) -> Result<FeatureVector, FeatureError> {
    if parts.is_empty() {
        return Err(FeatureError::EmptyInput("no feature parts to concatenate"));
    }
    let total: usize = parts.iter().map(|p| p.values.len()).sum();
    let mut values = Vec::with_capacity(total);
    for part in parts {
        let norm = part.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.extend(part.values.iter().map(|v| v / norm));
        } else {
            values.extend_from_slice(&part.values);
        }
    }
    Ok(FeatureVector::new(FeatureKind::All, values))
}

/// Resizes to the canonical size, converts to grayscale where needed
/// and dispatches to the requested extractor(s).
pub fn extract(
    img: &ImageRGB,
    kind: FeatureKind,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    cfg.validate()?;
    let canonical = resize_bilinear_rgb(img, cfg.canonical_size, cfg.canonical_size)?;
    match kind {
        FeatureKind::Hist => Ok(color_histogram(&canonical, cfg)),
        FeatureKind::Hog => hog(&to_grayscale(&canonical), cfg),
        FeatureKind::Daisy => daisy(&to_grayscale(&canonical), cfg),
        FeatureKind::All => {
            let gray = to_grayscale(&canonical);
            let parts = [
                color_histogram(&canonical, cfg),
                hog(&gray, cfg)?,
                daisy(&gray, cfg)?,
            ];
            concat_features(&parts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, width: u32, height: u32) -> ImageRGB {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..width as usize * height as usize * 3)
            .map(|_| rng.gen::<u8>())
            .collect();
        ImageRGB::from_raw(width, height, pixels)
    }

    #[test]
    fn concat_normalizes_parts_and_passes_zero_through() {
        let parts = [
            FeatureVector::new(FeatureKind::Hist, vec![3.0, 4.0]),
            FeatureVector::new(FeatureKind::Hog, vec![0.0, 0.0]),
        ];
        let out = concat_features(&parts).unwrap();
        assert_eq!(out.kind, FeatureKind::All);
        assert_eq!(out.values, vec![0.6, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn concat_single_unit_part_is_identity() {
        let parts = [FeatureVector::new(FeatureKind::Hist, vec![1.0])];
        let out = concat_features(&parts).unwrap();
        assert_eq!(out.values, vec![1.0]);
    }

    #[test]
    fn concat_rejects_empty_list() {
        assert!(matches!(
            concat_features(&[]).unwrap_err(),
            FeatureError::EmptyInput(_)
        ));
    }

    #[test]
    fn default_dims_follow_the_arithmetic() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.hist_dim(), 96);
        assert_eq!(cfg.hog_dim(), 15 * 15 * 4 * 9);
        assert_eq!(cfg.hog_dim(), 8100);
        assert_eq!(cfg.daisy_point_dim(), 200);
        assert_eq!(cfg.dim(FeatureKind::All), 96 + 8100 + cfg.daisy_dim());
    }

    #[test]
    fn extract_dims_and_composition() {
        let cfg = FeatureConfig::default();
        let img = random_image(7, 60, 40);
        let hist = extract(&img, FeatureKind::Hist, &cfg).unwrap();
        assert_eq!(hist.kind, FeatureKind::Hist);
        assert_eq!(hist.dim(), 3 * cfg.hist_bins as usize);

        let all = extract(&img, FeatureKind::All, &cfg).unwrap();
        let expect = cfg.dim(FeatureKind::Hist)
            + cfg.dim(FeatureKind::Hog)
            + cfg.dim(FeatureKind::Daisy);
        assert_eq!(all.dim(), expect);
    }

    #[test]
    fn extract_is_deterministic() {
        let cfg = FeatureConfig::default();
        let img = random_image(9, 50, 70);
        let a = extract(&img, FeatureKind::All, &cfg).unwrap();
        let b = extract(&img, FeatureKind::All, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dims_are_stable_across_images() {
        let cfg = FeatureConfig::default();
        let dims: Vec<usize> = (0..4)
            .map(|s| {
                extract(&random_image(s, 30 + s as u32, 45), FeatureKind::All, &cfg)
                    .unwrap()
                    .dim()
            })
            .collect();
        assert!(dims.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = FeatureConfig {
            hog_cell: 7,
            ..FeatureConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = FeatureConfig {
            daisy_radius: 64,
            ..FeatureConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = FeatureConfig {
            hist_bins: 0,
            ..FeatureConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_config_changes() {
        let a = FeatureConfig::default();
        let mut b = FeatureConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.hist_bins = 16;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn concat_part_norms_are_unit() {
        let cfg = FeatureConfig::default();
        let img = random_image(21, 128, 128);
        let all = extract(&img, FeatureKind::All, &cfg).unwrap();
        let hist_part = &all.values[..cfg.hist_dim()];
        let norm = hist_part.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-9);
    }
}
