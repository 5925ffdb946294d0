//! Dataset root layout:
//!
//! ```text
//! <root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//! <root>/fashion_mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//! <root>/fer2013/fer2013.csv
//! ```
//!
//! IDX datasets validate on the last `val_fraction` of the training file
//! and test on `t10k`; FER2013 validates on PublicTest and tests on
//! PrivateTest.

use std::path::Path;

use saccade_core::data::{normalize, Dataset, NormStats, Split};

use crate::config::DatasetKind;
use crate::error::Result;
use crate::fer::load_fer_csv;
use crate::idx::load_idx;

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Raw splits in `[0, 1]`; `train_limit`/`test_limit` of 0 keep everything.
pub fn load_splits(kind: DatasetKind, root: &Path, train_limit: usize, test_limit: usize, val_fraction: f64) -> Result<Splits> {
    let limit = |ds: Dataset, n: usize| if n == 0 { ds } else { ds.take(n) };
    match kind {
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let dir = root.join(kind.name());
            let c = kind.num_classes();
            let full = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                kind.name(),
                Split::Train,
                c,
            )?;
            let (train, val) = limit(full, train_limit).split_validation(val_fraction)?;
            let test = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                kind.name(),
                Split::Test,
                c,
            )?;
            Ok(Splits {
                train,
                val,
                test: limit(test, test_limit),
            })
        }
        DatasetKind::Fer2013 => {
            let s = load_fer_csv(&root.join("fer2013").join("fer2013.csv"))?;
            Ok(Splits {
                train: limit(s.train, train_limit),
                val: s.public_test,
                test: limit(s.private_test, test_limit),
            })
        }
    }
}

/// Normalizes all splits with training statistics.
pub fn normalized(mut s: Splits) -> Result<(Splits, NormStats)> {
    let stats = normalize(&mut s.train, &mut [&mut s.val, &mut s.test])?;
    Ok((s, stats))
}

/// Applies previously recorded statistics (e.g. from a checkpoint).
pub fn apply_stats(s: &mut Splits, stats: &NormStats) {
    for ds in [&mut s.train, &mut s.val, &mut s.test] {
        stats.apply(ds);
    }
}
