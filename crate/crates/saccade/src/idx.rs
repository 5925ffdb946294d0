//! IDX containers as used by MNIST and FashionMNIST: a big-endian magic
//! word, one big-endian u32 per dimension, then raw unsigned bytes.

use std::io::Write;
use std::path::Path;

use saccade_core::data::{Dataset, Split};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count·rows·cols` bytes, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            what: what.into(),
            expected: at + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::Magic {
            what: what.into(),
            expected,
            found,
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8], what: &str) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC, what)?;
    let n = be_u32(bytes, 4, what)? as usize;
    let rows = be_u32(bytes, 8, what)? as usize;
    let cols = be_u32(bytes, 12, what)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::Truncated {
            what: what.into(),
            expected: need,
            actual: bytes.len(),
        });
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: bytes[16..need].to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8], what: &str) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, what)?;
    let n = be_u32(bytes, 4, what)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(Error::Truncated {
            what: what.into(),
            expected: need,
            actual: bytes.len(),
        });
    }
    Ok(bytes[8..need].to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count() as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label file pair, scaling pixels to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path, name: &str, split: Split, num_classes: usize) -> Result<Dataset> {
    let images = parse_images(&read_file(images_path)?, &images_path.display().to_string())?;
    let labels = parse_labels(&read_file(labels_path)?, &labels_path.display().to_string())?;
    if images.rows != images.cols {
        return Err(Error::Format(format!(
            "{}: images are {}x{}, only square images are supported",
            images_path.display(),
            images.rows,
            images.cols
        )));
    }
    if images.count() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.count(),
            labels.len()
        )));
    }
    let pixels = images.pixels.iter().map(|&b| b as f32 / 255.0).collect();
    let labels = labels.into_iter().map(usize::from).collect();
    Ok(Dataset::new(name, split, images.rows, num_classes, pixels, labels)?)
}
