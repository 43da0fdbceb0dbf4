//! MNIST in the big-endian IDX container: loading, writing, stratified
//! subsets, and pooled pixel statistics.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::DatasetStats;
use crate::network::LabeledData;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;
/// Environment variable naming the directory that holds the IDX files.
pub const DATA_ENV: &str = "EDGE_ATLAS_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Standard MNIST file names `(images, labels)`.
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

/// Grayscale images kept as raw bytes; [`ImageSet::pixel`] and
/// [`ImageSet::to_labeled`] expose them scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    /// `len() * rows * cols` bytes, image-major.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let n = self.image_size();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn pixel(&self, image: usize, index: usize) -> f64 {
        f64::from(self.image_bytes(image)[index]) / 255.0
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Images selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        let mut pixels = Vec::with_capacity(indices.len() * self.image_size());
        for &i in indices {
            pixels.extend_from_slice(self.image_bytes(i));
        }
        ImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    /// Flattened pixels in `[0, 1]`, one image per row.
    pub fn to_labeled(&self) -> LabeledData {
        let features = Array2::from_shape_fn((self.len(), self.image_size()), |(i, j)| self.pixel(i, j));
        let labels = self.labels.iter().map(|&l| l as usize).collect();
        LabeledData::new(features, labels).expect("one label per image")
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let len = 4 * (dims + 1);
    if bytes.len() < len {
        return Err(Error::Truncated { path: path.into(), expected: len, actual: bytes.len() });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::MagicMismatch { path: path.into(), expected: magic, found });
    }
    Ok((0..dims).map(|d| be_u32(bytes, 4 * (d + 1)) as usize).collect())
}

fn payload<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    let actual = bytes.len() - offset;
    if actual < len {
        return Err(Error::Truncated { path: path.into(), expected: len, actual });
    }
    Ok(&bytes[offset..offset + len])
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<ImageSet> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read(ip)?;
    let dims = header(&image_bytes, ip, IMAGE_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = payload(&image_bytes, ip, 16, count * rows * cols)?.to_vec();

    let label_bytes = read(lp)?;
    let label_count = header(&label_bytes, lp, LABEL_MAGIC, 1)?[0];
    if label_count != count {
        return Err(Error::CountMismatch { images: count, labels: label_count });
    }
    let labels = payload(&label_bytes, lp, 8, count)?.to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::InvalidLabel { label: bad as usize, classes: CLASSES });
    }
    Ok(ImageSet { rows, cols, pixels, labels, split })
}

/// Write `set` as an IDX image/label file pair.
pub fn write_idx(set: &ImageSet, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let mut images = Vec::with_capacity(16 + set.pixels.len());
    for v in [IMAGE_MAGIC, set.len() as u32, set.rows as u32, set.cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&set.pixels);
    let mut labels = Vec::with_capacity(8 + set.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(set.len() as u32).to_be_bytes());
    labels.extend_from_slice(&set.labels);
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(ip, images).map_err(|e| Error::io(ip, e))?;
    fs::write(lp, labels).map_err(|e| Error::io(lp, e))
}

/// The data directory: an explicit path if given, else `$EDGE_ATLAS_DATA`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(DATA_ENV) {
        Some(p) if !p.is_empty() => Ok(PathBuf::from(p)),
        _ => Err(Error::Config(format!("no data directory: pass --data-dir or set {DATA_ENV}"))),
    }
}

/// Load one split from a directory holding the standard MNIST file names.
pub fn load_split(dir: impl AsRef<Path>, split: Split) -> Result<ImageSet> {
    let (images, labels) = split.file_names();
    let dir = dir.as_ref();
    load_idx(dir.join(images), dir.join(labels), split)
}

/// Pooled statistics over every pixel value of every image: the variance
/// `σ₀²` and the squared mean `μ₀²`.
pub fn compute_stats(set: &ImageSet) -> Result<DatasetStats> {
    if set.pixels.is_empty() {
        return Err(Error::Config("cannot compute statistics of an empty image set".into()));
    }
    let (mut sum, mut sum_sq) = (0u64, 0u64);
    for &p in &set.pixels {
        sum += u64::from(p);
        sum_sq += u64::from(p) * u64::from(p);
    }
    let n = set.pixels.len() as f64;
    let mean = sum as f64 / n / 255.0;
    let mean_sq = sum_sq as f64 / n / (255.0 * 255.0);
    DatasetStats::new((mean_sq - mean * mean).max(0.0), mean * mean)
}

/// Class-stratified random subset of `n` images, deterministic in `seed`.
/// Each class contributes `n / 10` images (plus one for some classes when
/// `n` is not a multiple of ten); classes too small to supply their share
/// are exhausted and the remainder is spread over the others.
pub fn subset(set: &ImageSet, n: usize, seed: u64) -> Result<ImageSet> {
    if n > set.len() {
        return Err(Error::Bounds { requested: n, available: set.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); CLASSES];
    for (i, &l) in set.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let quota = water_fill(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), n);
    let mut chosen: Vec<usize> =
        by_class.iter().zip(&quota).flat_map(|(members, &q)| members[..q].iter().copied()).collect();
    chosen.shuffle(&mut rng);
    Ok(set.select(&chosen))
}

/// Split `n` as evenly as possible across bins of limited capacity.
fn water_fill(capacity: &[usize], n: usize) -> Vec<usize> {
    let mut quota = vec![0; capacity.len()];
    let mut remaining = n;
    loop {
        let open: Vec<usize> = (0..capacity.len()).filter(|&c| quota[c] < capacity[c]).collect();
        if remaining == 0 || open.is_empty() {
            return quota;
        }
        let share = (remaining / open.len()).max(1);
        for c in open {
            let take = share.min(capacity[c] - quota[c]).min(remaining);
            quota[c] += take;
            remaining -= take;
        }
    }
}
