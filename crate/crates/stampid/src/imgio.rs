//! Raster image loading and geometry.
//!
//! Decodes PNG/JPEG files into [`ImageRGB`], converts to grayscale and
//! resizes with bilinear interpolation so every feature extractor sees
//! the same canonical input.

use std::path::Path;

use image::ImageFormat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported format (not PNG or JPEG): {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: String, reason: String },
    #[error("invalid target dimensions {0}x{1}")]
    InvalidDimensions(u32, u32),
    #[error("failed to write {path}: {reason}")]
    WriteFailed { path: String, reason: String },
}

/// 8-bit RGB raster, row-major `(R, G, B)` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageRGB {
    /// Builds an image from a raw buffer. Panics if the buffer length is
    /// not `width * height * 3` or a dimension is zero.
    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize * 3,
            "pixel buffer length must be width * height * 3"
        );
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        (self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }
}

/// Grayscale raster with luminance values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    pixels: Vec<f64>,
}

impl ImageGray {
    /// Builds an image from a raw buffer. Panics if the buffer length is
    /// not `width * height`, a dimension is zero, or a value falls
    /// outside `[0, 1]`.
    pub fn from_raw(width: u32, height: u32, pixels: Vec<f64>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize,
            "pixel buffer length must be width * height"
        );
        assert!(
            pixels.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            "luminance values must be finite and in [0, 1]"
        );
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

/// Decodes a PNG or JPEG file. Alpha is dropped; grayscale sources are
/// replicated across R = G = B.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRGB, ImageError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ImageError::FileNotFound(display.clone())
        } else {
            ImageError::CorruptImage {
                path: display.clone(),
                reason: e.to_string(),
            }
        }
    })?;
    let format = image::guess_format(&bytes)
        .map_err(|_| ImageError::UnsupportedFormat(display.clone()))?;
    if format != ImageFormat::Png && format != ImageFormat::Jpeg {
        return Err(ImageError::UnsupportedFormat(display));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| {
        ImageError::CorruptImage {
            path: display.clone(),
            reason: e.to_string(),
        }
    })?;
    let rgb = decoded.to_rgb8();
    Ok(ImageRGB::from_raw(
        rgb.width(),
        rgb.height(),
        rgb.into_raw(),
    ))
}

/// Writes an image as PNG (lossless, used by fixtures and debug dumps).
pub fn save_png(img: &ImageRGB, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width, img.height, img.pixels.clone())
            .expect("buffer length already validated");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImageError::WriteFailed {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

/// Writes a grayscale image as an 8-bit PNG, mapping `[0, 1]` to `[0, 255]`.
pub fn save_gray_png(img: &ImageGray, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf: image::GrayImage = image::ImageBuffer::from_raw(img.width, img.height, bytes)
        .expect("buffer length already validated");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImageError::WriteFailed {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

/// ITU-R BT.601 luminance, scaled to `[0, 1]`.
pub fn to_grayscale(img: &ImageRGB) -> ImageGray {
    let pixels = img
        .pixels
        .chunks_exact(3)
        .map(|px| {
            let lum = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            (lum / 255.0).clamp(0.0, 1.0)
        })
        .collect();
    ImageGray {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Source indices and interpolation weight for one output position,
/// center-aligned with edge clamping.
fn bilinear_axis(out_pos: u32, out_len: u32, in_len: u32) -> (usize, usize, f64) {
    let src = (out_pos as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    if src <= 0.0 {
        return (0, 0, 0.0);
    }
    let i0 = (src.floor() as usize).min(in_len as usize - 1);
    let frac = src - src.floor();
    let i1 = (i0 + 1).min(in_len as usize - 1);
    (i0, i1, frac)
}

/// Bilinear resize with edge clamping. Resizing to the source size
/// returns a value-identical copy.
pub fn resize_bilinear_rgb(
    img: &ImageRGB,
    target_w: u32,
    target_h: u32,
) -> Result<ImageRGB, ImageError> {
    if target_w == 0 || target_h == 0 {
        return Err(ImageError::InvalidDimensions(target_w, target_h));
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }
    let sw = img.width as usize;
    let mut pixels = Vec::with_capacity(target_w as usize * target_h as usize * 3);
    for y in 0..target_h {
        let (y0, y1, fy) = bilinear_axis(y, target_h, img.height);
        for x in 0..target_w {
            let (x0, x1, fx) = bilinear_axis(x, target_w, img.width);
            for c in 0..3 {
                let p00 = img.pixels[(y0 * sw + x0) * 3 + c] as f64;
                let p10 = img.pixels[(y0 * sw + x1) * 3 + c] as f64;
                let p01 = img.pixels[(y1 * sw + x0) * 3 + c] as f64;
                let p11 = img.pixels[(y1 * sw + x1) * 3 + c] as f64;
                let top = p00 * (1.0 - fx) + p10 * fx;
                let bot = p01 * (1.0 - fx) + p11 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(ImageRGB {
        width: target_w,
        height: target_h,
        pixels,
    })
}

/// Grayscale counterpart of [`resize_bilinear_rgb`].
pub fn resize_bilinear_gray(
    img: &ImageGray,
    target_w: u32,
    target_h: u32,
) -> Result<ImageGray, ImageError> {
    if target_w == 0 || target_h == 0 {
        return Err(ImageError::InvalidDimensions(target_w, target_h));
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }
    let sw = img.width as usize;
    let mut pixels = Vec::with_capacity(target_w as usize * target_h as usize);
    for y in 0..target_h {
        let (y0, y1, fy) = bilinear_axis(y, target_h, img.height);
        for x in 0..target_w {
            let (x0, x1, fx) = bilinear_axis(x, target_w, img.width);
            let p00 = img.pixels[y0 * sw + x0];
            let p10 = img.pixels[y0 * sw + x1];
            let p01 = img.pixels[y1 * sw + x0];
            let p11 = img.pixels[y1 * sw + x1];
            let top = p00 * (1.0 - fx) + p10 * fx;
            let bot = p01 * (1.0 - fx) + p11 * fx;
            pixels.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Ok(ImageGray {
        width: target_w,
        height: target_h,
        pixels,
    })
}
