//! LeNet-5 reference classifier over the full image.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::nn::activation::{relu_backward, relu_inplace};
use crate::nn::conv::{self, Conv2d, ConvCache};
use crate::nn::{scoped, Linear};
use crate::tensor::{Real, Tensor};

/// Inputs smaller than the classic 32×32 are zero-padded up to it by the
/// first convolution.
pub fn first_padding(image_size: usize) -> usize {
    32usize.saturating_sub(image_size) / 2
}

pub(crate) fn flat_side(image_size: usize) -> usize {
    let s = image_size + 2 * first_padding(image_size) - 4; // conv1 5x5
    let s = s / 2 - 4; // pool, conv2 5x5
    s / 2
}

/// conv5×5(6)–relu–pool2, conv5×5(16)–relu–pool2, dense 120, dense 84,
/// dense `num_classes`.
#[derive(Clone, Debug)]
pub struct LeNet<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub fc3: Linear<T>,
    pub image_size: usize,
}

#[derive(Clone, Debug)]
pub struct LeNetCache<T> {
    c1: ConvCache<T>,
    a1: Tensor<T>,
    p1_arg: Vec<usize>,
    c2: ConvCache<T>,
    a2: Tensor<T>,
    p2_arg: Vec<usize>,
    flat: Tensor<T>,
    h1: Tensor<T>,
    h2: Tensor<T>,
}

impl<T: Real> LeNet<T> {
    pub fn new<R: Rng + ?Sized>(image_size: usize, num_classes: usize, rng: &mut R) -> Self {
        let side = flat_side(image_size);
        LeNet {
            conv1: Conv2d::new(1, 6, 5, first_padding(image_size), rng),
            conv2: Conv2d::new(6, 16, 5, 0, rng),
            fc1: Linear::new(16 * side * side, 120, rng),
            fc2: Linear::new(120, 84, rng),
            fc3: Linear::new(84, num_classes, rng),
            image_size,
        }
    }

    /// `images` is `[batch, side, side]`; returns logits `[batch, classes]`.
    pub fn forward(&self, images: &[T], batch: usize) -> Result<(Tensor<T>, LeNetCache<T>)> {
        let side = self.image_size;
        let x = Tensor::from_vec(&[batch, 1, side, side], images.to_vec())?;
        let (mut a1, c1) = self.conv1.forward(&x)?;
        relu_inplace(a1.data_mut());
        let (p1, p1_arg) = conv::max_pool2(&a1);
        let (mut a2, c2) = self.conv2.forward(&p1)?;
        relu_inplace(a2.data_mut());
        let (p2, p2_arg) = conv::max_pool2(&a2);
        let n = p2.len() / batch;
        let flat = p2.reshape(&[batch, n])?;
        let mut h1 = self.fc1.forward(&flat)?;
        relu_inplace(h1.data_mut());
        let mut h2 = self.fc2.forward(&h1)?;
        relu_inplace(h2.data_mut());
        let logits = self.fc3.forward(&h2)?;
        Ok((
            logits,
            LeNetCache {
                c1,
                a1,
                p1_arg,
                c2,
                a2,
                p2_arg,
                flat,
                h1,
                h2,
            },
        ))
    }

    pub fn backward(&mut self, cache: &LeNetCache<T>, d_logits: &Tensor<T>) {
        let mut d_h2 = self.fc3.backward(&cache.h2, d_logits, true).expect("dx");
        relu_backward(&cache.h2, &mut d_h2);
        let mut d_h1 = self.fc2.backward(&cache.h1, &d_h2, true).expect("dx");
        relu_backward(&cache.h1, &mut d_h1);
        let d_flat = self.fc1.backward(&cache.flat, &d_h1, true).expect("dx");
        let s2 = cache.a2.shape();
        let d_p2 = d_flat.reshape(&[s2[0], s2[1], s2[2] / 2, s2[3] / 2]).expect("shape");
        let mut d_a2 = conv::max_pool2_backward(s2, &cache.p2_arg, &d_p2);
        relu_backward(&cache.a2, &mut d_a2);
        let d_p1 = self.conv2.backward(&cache.c2, &d_a2);
        let mut d_a1 = conv::max_pool2_backward(cache.a1.shape(), &cache.p1_arg, &d_p1);
        relu_backward(&cache.a1, &mut d_a1);
        self.conv1.backward(&cache.c1, &d_a1);
    }

    pub fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.conv1.visit_named(&scoped(prefix, "conv1"), f);
        self.conv2.visit_named(&scoped(prefix, "conv2"), f);
        self.fc1.visit_named(&scoped(prefix, "fc1"), f);
        self.fc2.visit_named(&scoped(prefix, "fc2"), f);
        self.fc3.visit_named(&scoped(prefix, "fc3"), f);
    }

    pub fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.conv1.visit_named_mut(&scoped(prefix, "conv1"), f);
        self.conv2.visit_named_mut(&scoped(prefix, "conv2"), f);
        self.fc1.visit_named_mut(&scoped(prefix, "fc1"), f);
        self.fc2.visit_named_mut(&scoped(prefix, "fc2"), f);
        self.fc3.visit_named_mut(&scoped(prefix, "fc3"), f);
    }
}
