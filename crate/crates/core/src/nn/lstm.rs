use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::activation::sigmoid_scalar;
use super::{init, scoped};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor, Trans};

/// Hidden and cell state for a batch, each `[batch, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// Everything the backward pass of one step needs.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    x: Tensor<T>,
    h_prev: Tensor<T>,
    c_prev: Tensor<T>,
    /// Activated gates `[batch, 4H]` in order i, f, g, o.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

/// LSTM cell with gate order (input, forget, candidate, output).
#[derive(Clone, Debug)]
pub struct LstmCell<T> {
    /// `[4H, in]`
    pub w_x: Tensor<T>,
    /// `[4H, H]`
    pub w_h: Tensor<T>,
    /// `[4H]`
    pub bias: Tensor<T>,
}

impl<T: Real> LstmCell<T> {
    /// Fan-in uniform weights, zero biases except a forget-gate bias of 1.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = input + hidden;
        let mut bias = init::zeros(&[4 * hidden]);
        for v in &mut bias.data_mut()[hidden..2 * hidden] {
            *v = T::one();
        }
        LstmCell {
            w_x: init::uniform_fan_in(&[4 * hidden, input], fan_in, rng),
            w_h: init::uniform_fan_in(&[4 * hidden, hidden], fan_in, rng),
            bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            w_x: init::zeros(&[4 * hidden, input]),
            w_h: init::zeros(&[4 * hidden, hidden]),
            bias: init::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_h.shape()[1]
    }

    pub fn step(&self, x: &Tensor<T>, state: &LstmState<T>) -> Result<LstmState<T>> {
        self.step_cached(x, state).map(|(s, _)| s)
    }

    pub fn step_cached(&self, x: &Tensor<T>, state: &LstmState<T>) -> Result<(LstmState<T>, LstmCache<T>)> {
        let hid = self.hidden();
        let b = x.rows();
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "lstm_step",
                detail: format!("input width {} but cell expects {}", x.cols(), self.input_dim()),
            });
        }
        if state.h.cols() != hid || state.c.cols() != hid || state.h.rows() != b || state.c.rows() != b {
            return Err(Error::Dimension {
                op: "lstm_step",
                detail: format!(
                    "state {:?}/{:?} does not match batch {} hidden {}",
                    state.h.shape(),
                    state.c.shape(),
                    b,
                    hid
                ),
            });
        }
        let g4 = 4 * hid;
        let mut z = vec![T::zero(); b * g4];
        for r in 0..b {
            z[r * g4..(r + 1) * g4].copy_from_slice(self.bias.data());
        }
        gemm(b, x.cols(), g4, T::one(), x.data(), Trans::No, self.w_x.data(), Trans::Yes, T::one(), &mut z);
        gemm(b, hid, g4, T::one(), state.h.data(), Trans::No, self.w_h.data(), Trans::Yes, T::one(), &mut z);

        let mut h = vec![T::zero(); b * hid];
        let mut c = vec![T::zero(); b * hid];
        let mut tanh_c = vec![T::zero(); b * hid];
        for r in 0..b {
            let zr = &mut z[r * g4..(r + 1) * g4];
            for j in 0..hid {
                let i = sigmoid_scalar(zr[j]);
                let f = sigmoid_scalar(zr[hid + j]);
                let g = zr[2 * hid + j].tanh();
                let o = sigmoid_scalar(zr[3 * hid + j]);
                zr[j] = i;
                zr[hid + j] = f;
                zr[2 * hid + j] = g;
                zr[3 * hid + j] = o;
                let cn = f * state.c.data()[r * hid + j] + i * g;
                let tc = cn.tanh();
                c[r * hid + j] = cn;
                tanh_c[r * hid + j] = tc;
                h[r * hid + j] = o * tc;
            }
        }
        let next = LstmState {
            h: Tensor::from_vec(&[b, hid], h)?,
            c: Tensor::from_vec(&[b, hid], c)?,
        };
        let cache = LstmCache {
            x: x.clone(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates: z,
            tanh_c,
        };
        Ok((next, cache))
    }

    /// Backpropagates `dh`, `dc` (gradients w.r.t. this step's outputs)
    /// through one step, accumulating parameter gradients.
    ///
    /// Returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &mut self,
        cache: &LstmCache<T>,
        dh: &Tensor<T>,
        dc: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let hid = self.hidden();
        let g4 = 4 * hid;
        let b = dh.rows();
        let mut dz = vec![T::zero(); b * g4];
        let mut dc_prev = vec![T::zero(); b * hid];
        for r in 0..b {
            let gates = &cache.gates[r * g4..(r + 1) * g4];
            let dzr = &mut dz[r * g4..(r + 1) * g4];
            for j in 0..hid {
                let k = r * hid + j;
                let (i, f, g, o) = (gates[j], gates[hid + j], gates[2 * hid + j], gates[3 * hid + j]);
                let tc = cache.tanh_c[k];
                let dhk = dh.data()[k];
                let dck = dc.data()[k] + dhk * o * (T::one() - tc * tc);
                let d_o = dhk * tc;
                let d_i = dck * g;
                let d_g = dck * i;
                let d_f = dck * cache.c_prev.data()[k];
                dc_prev[k] = dck * f;
                dzr[j] = d_i * i * (T::one() - i);
                dzr[hid + j] = d_f * f * (T::one() - f);
                dzr[2 * hid + j] = d_g * (T::one() - g * g);
                dzr[3 * hid + j] = d_o * o * (T::one() - o);
            }
        }
        let input = cache.x.cols();
        if let Some(gw) = self.w_x.grad_mut() {
            gemm(g4, b, input, T::one(), &dz, Trans::Yes, cache.x.data(), Trans::No, T::one(), gw);
        }
        if let Some(gw) = self.w_h.grad_mut() {
            gemm(g4, b, hid, T::one(), &dz, Trans::Yes, cache.h_prev.data(), Trans::No, T::one(), gw);
        }
        if let Some(gb) = self.bias.grad_mut() {
            for r in 0..b {
                for (g, &d) in gb.iter_mut().zip(&dz[r * g4..(r + 1) * g4]) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![T::zero(); b * input];
        gemm(b, g4, input, T::one(), &dz, Trans::No, self.w_x.data(), Trans::No, T::zero(), &mut dx);
        let mut dh_prev = vec![T::zero(); b * hid];
        gemm(b, g4, hid, T::one(), &dz, Trans::No, self.w_h.data(), Trans::No, T::zero(), &mut dh_prev);
        (
            Tensor::from_vec(&[b, input], dx).expect("shape"),
            Tensor::from_vec(&[b, hid], dh_prev).expect("shape"),
            Tensor::from_vec(&[b, hid], dc_prev).expect("shape"),
        )
    }

    pub fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&scoped(prefix, "w_x"), &self.w_x);
        f(&scoped(prefix, "w_h"), &self.w_h);
        f(&scoped(prefix, "bias"), &self.bias);
    }

    pub fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&scoped(prefix, "w_x"), &mut self.w_x);
        f(&scoped(prefix, "w_h"), &mut self.w_h);
        f(&scoped(prefix, "bias"), &mut self.bias);
    }
}

/// Single-sample functional form over `[in]` input and `[hidden]` state.
pub fn lstm_step<T: Real>(x: &Tensor<T>, state: &LstmState<T>, cell: &LstmCell<T>) -> Result<LstmState<T>> {
    let hid = cell.hidden();
    let xs = x.clone().reshape(&[1, x.len()])?;
    let st = LstmState {
        h: state.h.clone().reshape(&[1, state.h.len()])?,
        c: state.c.clone().reshape(&[1, state.c.len()])?,
    };
    let next = cell.step(&xs, &st)?;
    Ok(LstmState {
        h: next.h.reshape(&[hid])?,
        c: next.c.reshape(&[hid])?,
    })
}
