//! Whole-image context network used by DRAM to initialise its gaze layer.

use rand::Rng;

use crate::error::Result;
use crate::nn::activation::{relu_backward, relu_inplace, tanh_backward};
use crate::nn::conv::{self, Conv2d, ConvCache};
use crate::nn::{scoped, Linear};
use crate::tensor::{Real, Tensor};

/// Spatial grid the last feature map is pooled onto, independent of the
/// input resolution.
pub const CONTEXT_GRID: usize = 7;
pub const CONTEXT_CHANNELS: [usize; 3] = [16, 32, 64];

/// conv3×3(16)–relu–pool2, conv3×3(32)–relu–pool2, conv3×3(64)–relu,
/// adaptive average pool to 7×7, dense to the hidden width, tanh.
#[derive(Clone, Debug)]
pub struct ContextNet<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub fc: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct ContextCache<T> {
    c1: ConvCache<T>,
    a1: Tensor<T>,
    p1_arg: alloc::vec::Vec<usize>,
    c2: ConvCache<T>,
    a2: Tensor<T>,
    p2_arg: alloc::vec::Vec<usize>,
    c3: ConvCache<T>,
    a3: Tensor<T>,
    flat: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Real> ContextNet<T> {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let [c1, c2, c3] = CONTEXT_CHANNELS;
        ContextNet {
            conv1: Conv2d::new(1, c1, 3, 1, rng),
            conv2: Conv2d::new(c1, c2, 3, 1, rng),
            conv3: Conv2d::new(c2, c3, 3, 1, rng),
            fc: Linear::new(c3 * CONTEXT_GRID * CONTEXT_GRID, hidden, rng),
        }
    }

    /// `images` is `[batch, side, side]`; returns the initial hidden state
    /// `[batch, hidden]`.
    pub fn forward(&self, images: &[T], batch: usize, side: usize) -> Result<(Tensor<T>, ContextCache<T>)> {
        let x = Tensor::from_vec(&[batch, 1, side, side], images.to_vec())?;
        let (mut a1, c1) = self.conv1.forward(&x)?;
        relu_inplace(a1.data_mut());
        let (p1, p1_arg) = conv::max_pool2(&a1);
        let (mut a2, c2) = self.conv2.forward(&p1)?;
        relu_inplace(a2.data_mut());
        let (p2, p2_arg) = conv::max_pool2(&a2);
        let (mut a3, c3) = self.conv3.forward(&p2)?;
        relu_inplace(a3.data_mut());
        let pooled = conv::adaptive_avg_pool(&a3, CONTEXT_GRID, CONTEXT_GRID);
        let n = pooled.len() / batch;
        let flat = pooled.reshape(&[batch, n])?;
        let out = self.fc.forward(&flat)?.map(|v| v.tanh());
        Ok((
            out.clone(),
            ContextCache {
                c1,
                a1,
                p1_arg,
                c2,
                a2,
                p2_arg,
                c3,
                a3,
                flat,
                out,
            },
        ))
    }

    pub fn backward(&mut self, cache: &ContextCache<T>, d_out: &Tensor<T>) {
        let mut d = d_out.clone();
        tanh_backward(&cache.out, &mut d);
        let d_flat = self.fc.backward(&cache.flat, &d, true).expect("dx requested");
        let s3 = cache.a3.shape();
        let d_pooled = d_flat.reshape(&[s3[0], s3[1], CONTEXT_GRID, CONTEXT_GRID]).expect("shape");
        let mut d_a3 = conv::adaptive_avg_pool_backward(s3, &d_pooled);
        relu_backward(&cache.a3, &mut d_a3);
        let d_p2 = self.conv3.backward(&cache.c3, &d_a3);
        let mut d_a2 = conv::max_pool2_backward(cache.a2.shape(), &cache.p2_arg, &d_p2);
        relu_backward(&cache.a2, &mut d_a2);
        let d_p1 = self.conv2.backward(&cache.c2, &d_a2);
        let mut d_a1 = conv::max_pool2_backward(cache.a1.shape(), &cache.p1_arg, &d_p1);
        relu_backward(&cache.a1, &mut d_a1);
        self.conv1.backward(&cache.c1, &d_a1);
    }

    pub fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.conv1.visit_named(&scoped(prefix, "conv1"), f);
        self.conv2.visit_named(&scoped(prefix, "conv2"), f);
        self.conv3.visit_named(&scoped(prefix, "conv3"), f);
        self.fc.visit_named(&scoped(prefix, "fc"), f);
    }

    pub fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.conv1.visit_named_mut(&scoped(prefix, "conv1"), f);
        self.conv2.visit_named_mut(&scoped(prefix, "conv2"), f);
        self.conv3.visit_named_mut(&scoped(prefix, "conv3"), f);
        self.fc.visit_named_mut(&scoped(prefix, "fc"), f);
    }
}
