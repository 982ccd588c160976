//! MNIST IDX ingestion: big-endian container parsing, `[0, 1]`
//! normalization into volumes, and seeded minibatch slicing.
//!
//! The IDX container is big-endian throughout (checkpoints, by contrast,
//! are little-endian; both are fixed so nothing is guessed). Gzipped files
//! are accepted transparently when the two-byte gzip magic is present.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::volume::Volume;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;

/// Canonical file names of the four-part distribution.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Raw byte grids as decoded from an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    pub grids: Vec<Vec<u8>>,
}

/// Labelled images normalized to `[0, 1]`, immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Volume>,
    labels: Vec<u8>,
    name: String,
}

impl Dataset {
    pub fn new(images: Vec<Volume>, labels: Vec<u8>, name: impl Into<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Pairing { images: images.len(), labels: labels.len() });
        }
        for (i, image) in images.iter().enumerate() {
            if image.shape() != (IMAGE_SIDE, IMAGE_SIDE, 1) {
                return Err(Error::Shape(format!(
                    "image {i} has shape {:?}, expected 28x28x1",
                    image.shape()
                )));
            }
            if image.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Numeric(format!("image {i} has values outside [0, 1]")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Label { label: bad as usize, classes: 10 });
        }
        Ok(Dataset { images, labels, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &Volume {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn images(&self) -> &[Volume] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// First `n` samples, in stored order.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        Dataset::new(
            self.images[..n].to_vec(),
            self.labels[..n].to_vec(),
            format!("{}[..{n}]", self.name),
        )
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Decodes an IDX image container into raw byte grids.
pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages> {
    if bytes.len() < 16 {
        return Err(Error::Format(format!(
            "image file needs a 16-byte header, got {} bytes",
            bytes.len()
        )));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let expected = 16u64 + n as u64 * rows as u64 * cols as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Length { expected: expected as usize, actual: bytes.len() });
    }
    let grid_len = rows * cols;
    let grids = if grid_len == 0 {
        vec![Vec::new(); n]
    } else {
        bytes[16..].chunks_exact(grid_len).map(|c| c.to_vec()).collect()
    };
    Ok(RawImages { rows, cols, grids })
}

/// Decodes an IDX label container. Labels beyond 9 are rejected.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "label file needs an 8-byte header, got {} bytes",
            bytes.len()
        )));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4) as usize;
    let expected = 8u64 + n as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Length { expected: expected as usize, actual: bytes.len() });
    }
    let labels = bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Label { label: bad as usize, classes: 10 });
    }
    Ok(labels)
}

/// Scales bytes to `[0, 1]` (`byte / 255`) and pairs them with labels.
pub fn normalize(raw: &RawImages, labels: &[u8], name: impl Into<String>) -> Result<Dataset> {
    if raw.grids.len() != labels.len() {
        return Err(Error::Pairing { images: raw.grids.len(), labels: labels.len() });
    }
    if raw.rows != IMAGE_SIDE || raw.cols != IMAGE_SIDE {
        return Err(Error::Format(format!(
            "expected 28x28 images, got {}x{}",
            raw.rows, raw.cols
        )));
    }
    let images = raw
        .grids
        .iter()
        .map(|g| {
            let data = g.iter().map(|&b| b as f64 / 255.0).collect();
            Volume::from_vec(IMAGE_SIDE, IMAGE_SIDE, 1, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images, labels.to_vec(), name)
}

/// Inverse of the normalization scaling, exact for every byte value.
pub fn denormalize(value: f64) -> u8 {
    (value * 255.0).round() as u8
}

/// Shuffled index chunks: a seeded Fisher-Yates permutation of `0..n` cut
/// into `batch_size` pieces, the final short piece included.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut indices: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut indices);
    indices.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Seeded minibatch view of a dataset. The union of all batches is exactly
/// the dataset.
pub fn batches(data: &Dataset, batch_size: usize, seed: u64) -> Vec<(Vec<&Volume>, Vec<u8>)> {
    batch_indices(data.len(), batch_size, seed)
        .into_iter()
        .map(|chunk| {
            let images = chunk.iter().map(|&i| data.image(i)).collect();
            let labels = chunk.iter().map(|&i| data.label(i)).collect();
            (images, labels)
        })
        .collect()
}

/// Reads a file, transparently gunzipping when the gzip magic is present.
pub fn load_bytes(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut decoded = Vec::new();
        GzDecoder::new(&bytes[..])
            .read_to_end(&mut decoded)
            .map_err(|e| Error::Format(format!("gzip decode of {}: {e}", path.display())))?;
        Ok(decoded)
    } else {
        Ok(bytes)
    }
}

/// Loads and normalizes one image/label file pair.
pub fn load_pair(images: &Path, labels: &Path, name: impl Into<String>) -> Result<Dataset> {
    let raw = parse_idx_images(&load_bytes(images)?)?;
    let labels = parse_idx_labels(&load_bytes(labels)?)?;
    normalize(&raw, &labels, name)
}

fn resolve(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("neither {} nor {} exists", plain.display(), gz.display()),
    )))
}

/// Loads the 60k training split from a directory holding the canonical
/// file names (optionally gzipped).
pub fn load_train(dir: &Path) -> Result<Dataset> {
    load_pair(&resolve(dir, TRAIN_IMAGES)?, &resolve(dir, TRAIN_LABELS)?, "mnist-train")
}

/// Loads the 10k test split.
pub fn load_test(dir: &Path) -> Result<Dataset> {
    load_pair(&resolve(dir, TEST_IMAGES)?, &resolve(dir, TEST_LABELS)?, "mnist-test")
}
