use alloc::format;
use alloc::vec;

use rand::Rng;

use super::{init, scoped, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor, Trans};

/// Dense affine map `y = W x + b` applied row-wise to a `[batch, in]` matrix.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: init::uniform_fan_in(&[output, input], input, rng),
            bias: init::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: init::zeros(&[output, input]),
            bias: init::zeros(&[output]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::Dimension {
                op: "linear",
                detail: format!(
                    "input has width {} but weights are {:?}",
                    x.cols(),
                    self.weight.shape()
                ),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (b, i, o) = (x.rows(), self.in_dim(), self.out_dim());
        let mut y = vec![T::zero(); b * o];
        for r in 0..b {
            y[r * o..(r + 1) * o].copy_from_slice(self.bias.data());
        }
        gemm(b, i, o, T::one(), x.data(), Trans::No, self.weight.data(), Trans::Yes, T::one(), &mut y);
        Tensor::from_vec(&[b, o], y)
    }

    /// Accumulates parameter gradients for upstream `dy` and optionally
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, want_dx: bool) -> Option<Tensor<T>> {
        let (b, i, o) = (x.rows(), self.in_dim(), self.out_dim());
        debug_assert_eq!(dy.rows(), b);
        debug_assert_eq!(dy.cols(), o);
        if let Some(gw) = self.weight.grad_mut() {
            gemm(o, b, i, T::one(), dy.data(), Trans::Yes, x.data(), Trans::No, T::one(), gw);
        }
        if let Some(gb) = self.bias.grad_mut() {
            for r in 0..b {
                for (g, &d) in gb.iter_mut().zip(dy.row(r)) {
                    *g += d;
                }
            }
        }
        if !want_dx {
            return None;
        }
        let mut dx = vec![T::zero(); b * i];
        gemm(b, o, i, T::one(), dy.data(), Trans::No, self.weight.data(), Trans::No, T::zero(), &mut dx);
        Some(Tensor::from_vec(&[b, i], dx).expect("shape"))
    }

    pub fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&scoped(prefix, "weight"), &self.weight);
        f(&scoped(prefix, "bias"), &self.bias);
    }

    pub fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&scoped(prefix, "weight"), &mut self.weight);
        f(&scoped(prefix, "bias"), &mut self.bias);
    }
}

impl<T: Real> Parameters<T> for Linear<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.visit_named("linear", f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.visit_named_mut("linear", f)
    }
}

/// Functional form: `weights·input + bias` for a `[in]` vector or a
/// `[batch, in]` matrix.
pub fn linear<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    if weights.shape().len() != 2 || bias.shape() != [weights.shape()[0]] {
        return Err(Error::Dimension {
            op: "linear",
            detail: format!("weights {:?} and bias {:?} do not conform", weights.shape(), bias.shape()),
        });
    }
    let layer = Linear {
        weight: weights.clone(),
        bias: bias.clone(),
    };
    let vector = input.shape().len() == 1;
    let y = layer.forward(input)?;
    if vector {
        let o = y.cols();
        y.reshape(&[o])
    } else {
        Ok(y)
    }
}
