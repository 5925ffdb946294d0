use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Max-shifted log-softmax of one row of logits.
pub fn log_softmax_row<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = v - lse;
    }
}

/// Log-softmax along the last axis.
pub fn log_softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(logits.shape());
    let c = logits.cols();
    for r in 0..logits.rows() {
        log_softmax_row(logits.row(r), &mut out.data_mut()[r * c..(r + 1) * c]);
    }
    out
}

pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    log_softmax(logits).map(|v| v.exp())
}

/// Cross-entropy of one row of logits against `label`.
///
/// Returns the loss and its gradient with respect to the logits,
/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::Index {
            what: "class label",
            index: label,
            size: logits.len(),
        });
    }
    let mut logp = alloc::vec![T::zero(); logits.len()];
    log_softmax_row(logits, &mut logp);
    let mut grad: Vec<T> = logp.iter().map(|v| v.exp()).collect();
    grad[label] -= T::one();
    Ok((-logp[label], grad))
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
