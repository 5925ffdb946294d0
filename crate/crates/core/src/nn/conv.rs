//! 2-D convolution and pooling over `[batch, channels, height, width]`
//! tensors, enough for the LeNet-5 reference and the DRAM context network.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{init, scoped};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor, Trans};

/// Square-kernel, stride-1 convolution with symmetric zero padding.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    pub kernel: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    cols: Vec<Vec<T>>,
    in_shape: [usize; 4],
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, kernel: usize, pad: usize, rng: &mut R) -> Self {
        Conv2d {
            weight: init::uniform_fan_in(&[output, input, kernel, kernel], input * kernel * kernel, rng),
            bias: init::zeros(&[output]),
            kernel,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.pad + 1 - self.kernel, w + 2 * self.pad + 1 - self.kernel)
    }

    fn im2col(&self, x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
        let k = self.kernel;
        let (oh, ow) = self.output_hw(h, w);
        let p = oh * ow;
        let mut cols = vec![T::zero(); c * k * k * p];
        for ch in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ch * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * ow + ox] = x[(ch * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
        let k = self.kernel;
        let (oh, ow) = self.output_hw(h, w);
        let p = oh * ow;
        for ch in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ch * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dx[(ch * h + iy as usize) * w + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels() || s[2] + 2 * self.pad < self.kernel || s[3] + 2 * self.pad < self.kernel {
            return Err(Error::Dimension {
                op: "conv2d",
                detail: format!("input {:?} for weights {:?}", s, self.weight.shape()),
            });
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = self.output_hw(h, w);
        let (o, kk, p) = (self.out_channels(), c * self.kernel * self.kernel, oh * ow);
        let mut out = vec![T::zero(); b * o * p];
        let mut caches = Vec::with_capacity(b);
        for n in 0..b {
            let cols = self.im2col(&x.data()[n * c * h * w..(n + 1) * c * h * w], c, h, w);
            let dst = &mut out[n * o * p..(n + 1) * o * p];
            for (oc, chunk) in dst.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.data()[oc]);
            }
            gemm(o, kk, p, T::one(), self.weight.data(), Trans::No, &cols, Trans::No, T::one(), dst);
            caches.push(cols);
        }
        Ok((
            Tensor::from_vec(&[b, o, oh, ow], out)?,
            ConvCache {
                cols: caches,
                in_shape: [b, c, h, w],
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let [b, c, h, w] = cache.in_shape;
        let (oh, ow) = self.output_hw(h, w);
        let (o, kk, p) = (self.out_channels(), c * self.kernel * self.kernel, oh * ow);
        let mut dx = vec![T::zero(); b * c * h * w];
        let mut dcols = vec![T::zero(); kk * p];
        for n in 0..b {
            let dyn_ = &dy.data()[n * o * p..(n + 1) * o * p];
            if let Some(gw) = self.weight.grad_mut() {
                gemm(o, p, kk, T::one(), dyn_, Trans::No, &cache.cols[n], Trans::Yes, T::one(), gw);
            }
            if let Some(gb) = self.bias.grad_mut() {
                for (oc, chunk) in dyn_.chunks(p).enumerate() {
                    gb[oc] += chunk.iter().copied().sum::<T>();
                }
            }
            gemm(kk, o, p, T::one(), self.weight.data(), Trans::Yes, dyn_, Trans::No, T::zero(), &mut dcols);
            self.col2im(&dcols, c, h, w, &mut dx[n * c * h * w..(n + 1) * c * h * w]);
        }
        Tensor::from_vec(&[b, c, h, w], dx).expect("shape")
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

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn max_pool2<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); b * c * oh * ow];
    let mut arg = vec![0usize; out.len()];
    for plane in 0..b * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * oy + dy) * w + 2 * ox + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                out[o] = src[best];
                arg[o] = plane * h * w + best;
            }
        }
    }
    (Tensor::from_vec(&[b, c, oh, ow], out).expect("shape"), arg)
}

pub fn max_pool2_backward<T: Real>(in_shape: &[usize], argmax: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    for (&i, &d) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] += d;
    }
    dx
}

fn adaptive_bins(input: usize, output: usize) -> Vec<(usize, usize)> {
    (0..output)
        .map(|i| {
            let start = (i * input) / output;
            let end = ((i + 1) * input).div_ceil(output);
            (start, end)
        })
        .collect()
}

/// Average pooling onto a fixed `out_h × out_w` grid, whatever the input size.
pub fn adaptive_avg_pool<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ry, rx) = (adaptive_bins(h, out_h), adaptive_bins(w, out_w));
    let mut out = vec![T::zero(); b * c * out_h * out_w];
    for plane in 0..b * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1)) in ry.iter().enumerate() {
            for (ox, &(x0, x1)) in rx.iter().enumerate() {
                let mut acc = T::zero();
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        acc += src[yy * w + xx];
                    }
                }
                out[(plane * out_h + oy) * out_w + ox] = acc / T::lit(((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Tensor::from_vec(&[b, c, out_h, out_w], out).expect("shape")
}

pub fn adaptive_avg_pool_backward<T: Real>(in_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (out_h, out_w) = (dy.shape()[2], dy.shape()[3]);
    let (ry, rx) = (adaptive_bins(h, out_h), adaptive_bins(w, out_w));
    let mut dx = Tensor::zeros(in_shape);
    for plane in 0..b * c {
        for (oy, &(y0, y1)) in ry.iter().enumerate() {
            for (ox, &(x0, x1)) in rx.iter().enumerate() {
                let g = dy.data()[(plane * out_h + oy) * out_w + ox] / T::lit(((y1 - y0) * (x1 - x0)) as f64);
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        dx.data_mut()[plane * h * w + yy * w + xx] += g;
                    }
                }
            }
        }
    }
    dx
}
