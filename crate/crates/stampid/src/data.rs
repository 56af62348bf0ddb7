//! Dataset ingestion, stratified splits and flip/rotation augmentation.
//!
//! The on-disk layout is `root/<country>/<year>/<image>.{png,jpg,jpeg}`;
//! a CSV manifest with header `path,country,year` is the alternative
//! input and the output format of the scan.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{extract, FeatureConfig, FeatureError, FeatureKind, FeatureVector};
use crate::imgio::{load_image, ImageError, ImageRGB};
use crate::learn::Task;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset root not found: {0}")]
    RootNotFound(String),
    #[error("empty dataset under {0}")]
    EmptyDataset(String),
    #[error("class {class:?} has {count} records; need at least 2 to split")]
    ClassTooSmall { class: String, count: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("cannot access {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("failed on {path}: {source}")]
    Image {
        path: String,
        source: ImageError,
    },
    #[error("failed on {path}: {source}")]
    Feature {
        path: String,
        source: FeatureError,
    },
}

/// One labeled image on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub path: String,
    pub country: String,
    pub year: String,
}

impl SampleRecord {
    pub fn label(&self, task: Task) -> &str {
        match task {
            Task::Country => &self.country,
            Task::Year => &self.year,
        }
    }
}

/// Ordered sample records plus the distinct labels they carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<SampleRecord>,
    countries: Vec<String>,
    years: Vec<String>,
}

impl DatasetManifest {
    /// Records keep their given order; countries and years are the
    /// sorted distinct values over them. Duplicate paths are rejected.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self, DataError> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &records {
            if r.path.is_empty() || r.country.is_empty() || r.year.is_empty() {
                return Err(DataError::InvalidManifest(format!(
                    "record with empty field: {r:?}"
                )));
            }
            if !seen.insert(r.path.as_str()) {
                return Err(DataError::InvalidManifest(format!(
                    "duplicate path {:?}",
                    r.path
                )));
            }
        }
        let mut countries: Vec<String> = seen_values(&records, |r| &r.country);
        let mut years: Vec<String> = seen_values(&records, |r| &r.year);
        countries.sort();
        years.sort();
        Ok(Self {
            records,
            countries,
            years,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn years(&self) -> &[String] {
        &self.years
    }

    pub fn labels(&self, task: Task) -> &[String] {
        match task {
            Task::Country => &self.countries,
            Task::Year => &self.years,
        }
    }
}

fn seen_values(records: &[SampleRecord], get: impl Fn(&SampleRecord) -> &String) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        let v = get(r);
        if !out.contains(v) {
            out.push(v.clone());
        }
    }
    out
}

/// Scan outcome: the manifest plus how many non-image files were
/// skipped along the way.
#[derive(Debug)]
pub struct ScanResult {
    pub manifest: DatasetManifest,
    pub skipped: usize,
}

fn is_image_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with(".png") || lower.ends_with(".jpg") || lower.ends_with(".jpeg")
}

fn read_dir_sorted(path: &Path) -> Result<Vec<std::fs::DirEntry>, DataError> {
    let iter = std::fs::read_dir(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut entries: Vec<_> = iter
        .collect::<Result<_, _>>()
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Walks `root/<country>/<year>/<image>` and builds a manifest sorted
/// by (country, year, filename), independent of filesystem enumeration
/// order. Non-image files are counted and skipped.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<ScanResult, DataError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(DataError::RootNotFound(root.display().to_string()));
    }
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for country_entry in read_dir_sorted(root)? {
        if !country_entry.path().is_dir() {
            skipped += 1;
            continue;
        }
        let country = country_entry.file_name().to_string_lossy().into_owned();
        for year_entry in read_dir_sorted(&country_entry.path())? {
            if !year_entry.path().is_dir() {
                skipped += 1;
                continue;
            }
            let year = year_entry.file_name().to_string_lossy().into_owned();
            for file in read_dir_sorted(&year_entry.path())? {
                let name = file.file_name().to_string_lossy().into_owned();
                if file.path().is_dir() || !is_image_name(&name) {
                    skipped += 1;
                    continue;
                }
                records.push(SampleRecord {
                    path: file.path().display().to_string(),
                    country: country.clone(),
                    year: year.clone(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset(root.display().to_string()));
    }
    records.sort_by(|a, b| {
        (&a.country, &a.year, &a.path).cmp(&(&b.country, &b.year, &b.path))
    });
    Ok(ScanResult {
        manifest: DatasetManifest::new(records)?,
        skipped,
    })
}

/// Writes the manifest CSV (`path,country,year`, UTF-8, LF endings).
pub fn write_manifest_csv(m: &DatasetManifest, out: &mut impl Write) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let io_err = |e: csv::Error| DataError::InvalidManifest(e.to_string());
    w.write_record(["path", "country", "year"]).map_err(io_err)?;
    for r in &m.records {
        w.write_record([&r.path, &r.country, &r.year]).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| DataError::InvalidManifest(e.to_string()))
}

/// Reads a manifest CSV produced by [`write_manifest_csv`] (or written
/// by hand with the same header).
pub fn read_manifest_csv(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::InvalidManifest(e.to_string()))?;
    if headers != vec!["path", "country", "year"] {
        return Err(DataError::InvalidManifest(format!(
            "expected header path,country,year, found {headers:?}"
        )));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DataError::InvalidManifest(e.to_string()))?;
        if row.len() != 3 {
            return Err(DataError::InvalidManifest(format!(
                "expected 3 columns, found {}",
                row.len()
            )));
        }
        records.push(SampleRecord {
            path: row[0].to_string(),
            country: row[1].to_string(),
            year: row[2].to_string(),
        });
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset(path.display().to_string()));
    }
    DatasetManifest::new(records)
}

/// Train/test partition of manifest record indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

fn class_seed(seed: u64, class: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(class.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Shuffles each class with a generator seeded from `(seed, class)` and
/// sends the first `round(ratio * n)` records to train, the remainder
/// to test. Deterministic per seed.
pub fn stratified_split(
    m: &DatasetManifest,
    task: Task,
    ratio: f64,
    seed: u64,
) -> Result<SplitResult, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        by_class.entry(r.label(task)).or_default().push(i);
    }
    for (class, members) in &by_class {
        if members.len() < 2 {
            return Err(DataError::ClassTooSmall {
                class: class.to_string(),
                count: members.len(),
            });
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class {
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, class));
        members.shuffle(&mut rng);
        let cut = (ratio * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitResult {
        train,
        test,
        seed,
        ratio,
    })
}

pub fn flip_horizontal(img: &ImageRGB) -> ImageRGB {
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = img.get(w - 1 - x, y);
            pixels.extend_from_slice(&[r, g, b]);
        }
    }
    ImageRGB::from_raw(w, h, pixels)
}

pub fn flip_vertical(img: &ImageRGB) -> ImageRGB {
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = img.get(x, h - 1 - y);
            pixels.extend_from_slice(&[r, g, b]);
        }
    }
    ImageRGB::from_raw(w, h, pixels)
}

/// Clockwise quarter turn; width and height swap.
pub fn rotate90(img: &ImageRGB) -> ImageRGB {
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for y in 0..w {
        for x in 0..h {
            let (r, g, b) = img.get(y, h - 1 - x);
            pixels.extend_from_slice(&[r, g, b]);
        }
    }
    ImageRGB::from_raw(h, w, pixels)
}

pub fn rotate180(img: &ImageRGB) -> ImageRGB {
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = img.get(w - 1 - x, h - 1 - y);
            pixels.extend_from_slice(&[r, g, b]);
        }
    }
    ImageRGB::from_raw(w, h, pixels)
}

/// Label-preserving variants used for training-set expansion:
/// `[original, horizontal flip, vertical flip, rotate90 cw, rotate180]`.
pub fn augment_image(img: &ImageRGB) -> Vec<ImageRGB> {
    vec![
        img.clone(),
        flip_horizontal(img),
        flip_vertical(img),
        rotate90(img),
        rotate180(img),
    ]
}

/// Feature vectors paired with their country and year labels.
pub type FeatureMatrix = (Vec<FeatureVector>, Vec<String>, Vec<String>);

/// Feature matrix for the given record indices, extracted concurrently
/// but assembled in index order. With `augment` every image expands to
/// its five variants and labels are replicated alongside.
pub fn build_feature_matrix(
    m: &DatasetManifest,
    indices: &[usize],
    kind: FeatureKind,
    cfg: &FeatureConfig,
    augment: bool,
) -> Result<FeatureMatrix, DataError> {
    let per_record: Vec<Result<Vec<FeatureVector>, DataError>> = indices
        .par_iter()
        .map(|&i| {
            let record = &m.records[i];
            let img = load_image(&record.path).map_err(|source| DataError::Image {
                path: record.path.clone(),
                source,
            })?;
            let variants = if augment {
                augment_image(&img)
            } else {
                vec![img]
            };
            variants
                .iter()
                .map(|v| {
                    extract(v, kind, cfg).map_err(|source| DataError::Feature {
                        path: record.path.clone(),
                        source,
                    })
                })
                .collect()
        })
        .collect();

    let mut features = Vec::new();
    let mut countries = Vec::new();
    let mut years = Vec::new();
    for (&i, result) in indices.iter().zip(per_record) {
        let record = &m.records[i];
        for fv in result? {
            features.push(fv);
            countries.push(record.country.clone());
            years.push(record.year.clone());
        }
    }
    Ok((features, countries, years))
}
