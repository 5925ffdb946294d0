//! In-memory datasets, mean/std normalization and seeded batching.
//! Decoding of on-disk formats lives in the `saccade` crate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Square grayscale images stored row-major, one after another.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub side: usize,
    pub num_classes: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    /// Checks sizes, label range and finiteness.
    pub fn new(
        name: impl Into<String>,
        split: Split,
        side: usize,
        num_classes: usize,
        images: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let px = side * side;
        if px == 0 || images.len() != labels.len() * px {
            return Err(Error::Dimension {
                op: "dataset",
                detail: format!("{} pixels for {} labels of {}x{}", images.len(), labels.len(), side, side),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Index {
                what: "class label",
                index: bad,
                size: num_classes,
            });
        }
        if let Some(i) = images.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("pixel {} of image {}", i % px, i / px),
            });
        }
        Ok(Dataset {
            name: name.into(),
            split,
            side,
            num_classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let px = self.pixels();
        &self.images[i * px..(i + 1) * px]
    }

    /// Images and labels of the given rows, concatenated in order.
    pub fn gather(&self, rows: &[usize]) -> (Vec<f32>, Vec<usize>) {
        let mut images = Vec::with_capacity(rows.len() * self.pixels());
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            images.extend_from_slice(self.image(r));
            labels.push(self.labels[r]);
        }
        (images, labels)
    }

    /// Rows `range` as a new dataset with the given split tag.
    pub fn slice(&self, range: core::ops::Range<usize>, split: Split) -> Dataset {
        let px = self.pixels();
        Dataset {
            name: self.name.clone(),
            split,
            side: self.side,
            num_classes: self.num_classes,
            images: self.images[range.start * px..range.end * px].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }

    /// First `n` rows (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        self.slice(0..n.min(self.len()), self.split)
    }

    /// Splits off the last `fraction` of the rows as a validation set.
    pub fn split_validation(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("validation fraction must be in [0, 1), got {fraction}")));
        }
        let n_val = libm::round(self.len() as f64 * fraction) as usize;
        let cut = self.len() - n_val;
        Ok((self.slice(0..cut, Split::Train), self.slice(cut..self.len(), Split::Val)))
    }
}

/// Pixel mean and standard deviation of a reference split.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Standard deviations below this are treated as 1 so constant images stay
/// finite.
pub const STD_EPS: f64 = 1e-8;

impl NormStats {
    pub fn compute(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let n = ds.images.len() as f64;
        let mean = ds.images.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = ds.images.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
        Ok(NormStats {
            mean,
            std: libm::sqrt(var),
        })
    }

    pub fn apply(&self, ds: &mut Dataset) {
        let std = if self.std < STD_EPS { 1.0 } else { self.std };
        for v in &mut ds.images {
            *v = ((*v as f64 - self.mean) / std) as f32;
        }
    }
}

/// Normalizes every split with statistics of `train` and returns them.
pub fn normalize(train: &mut Dataset, others: &mut [&mut Dataset]) -> Result<NormStats> {
    let stats = NormStats::compute(train)?;
    stats.apply(train);
    for ds in others.iter_mut() {
        stats.apply(ds);
    }
    Ok(stats)
}

/// A shuffled partition of `0..n` into batches; the last one may be short.
pub fn batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Unshuffled batches, for evaluation.
pub fn sequential_batches(n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}
