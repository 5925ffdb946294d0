use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::Parameters;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, one buffer per parameter tensor in
/// traversal order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
            config,
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}

/// One Adam step over every parameter of `model`, reading the gradient
/// slots. Fails without touching anything when a gradient is not finite.
pub fn adam_update<T: Real>(model: &mut dyn Parameters<T>, state: &mut AdamState<T>) -> Result<()> {
    let mut bad: Option<String> = None;
    let mut sizes = Vec::new();
    model.visit(&mut |name, t| {
        sizes.push(t.len());
        if bad.is_some() {
            return;
        }
        if let Some(g) = t.grad() {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                bad = Some(format!("gradient of {name}[{i}] = {:?} at step {}", g[i], state.step + 1));
            }
        }
    });
    if let Some(context) = bad {
        return Err(Error::NonFinite { context });
    }
    if state.m.is_empty() {
        state.m = sizes.iter().map(|&n| alloc::vec![T::zero(); n]).collect();
        state.v = sizes.iter().map(|&n| alloc::vec![T::zero(); n]).collect();
    } else if state.m.len() != sizes.len() || state.m.iter().zip(&sizes).any(|(m, &n)| m.len() != n) {
        return Err(Error::Dimension {
            op: "adam_update",
            detail: format!("optimizer holds {} buffers, model has {}", state.m.len(), sizes.len()),
        });
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - num_traits::Float::powi(c.beta1, t);
    let bc2 = 1.0 - num_traits::Float::powi(c.beta2, t);
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
    let step_size = T::lit(c.lr / bc1);
    let inv_bc2_sqrt = T::lit(1.0 / libm::sqrt(bc2));
    let eps = T::lit(c.eps);

    let mut k = 0;
    let (ms, vs) = (&mut state.m, &mut state.v);
    model.visit_mut(&mut |_, p: &mut Tensor<T>| {
        let (data, grad) = p.data_and_grad_mut();
        if let Some(grad) = grad {
            let (m, v) = (&mut ms[k], &mut vs[k]);
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                data[i] -= step_size * m[i] / (v[i].sqrt() * inv_bc2_sqrt + eps);
            }
        }
        k += 1;
    });
    Ok(())
}

/// Euclidean norm of all gradients taken together.
pub fn global_grad_norm<T: Real>(model: &dyn Parameters<T>) -> f64 {
    let mut sq = 0.0f64;
    model.visit(&mut |_, t| {
        if let Some(g) = t.grad() {
            sq += g.iter().map(|v| {
                let x = v.to_f64().unwrap_or(f64::NAN);
                x * x
            }).sum::<f64>();
        }
    });
    libm::sqrt(sq)
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm<T: Real>(model: &mut dyn Parameters<T>, max_norm: f64) -> f64 {
    let norm = global_grad_norm(model);
    if norm > max_norm && norm.is_finite() {
        let scale = T::lit(max_norm / norm);
        model.visit_mut(&mut |_, t| {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
        });
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use alloc::vec;

    struct Scalar(Tensor<f64>);

    impl Parameters<f64> for Scalar {
        fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<f64>)) {
            f("x", &self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>)) {
            f("x", &mut self.0)
        }
    }

    fn scalar(v: f64, g: f64) -> Scalar {
        let mut t = Tensor::vector(vec![v]).requires_grad();
        t.grad_mut().unwrap()[0] = g;
        Scalar(t)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut layer = Linear::<f64>::zeros(3, 2);
        layer.weight.data_mut()[1] = 0.25;
        let before = layer.weight.clone();
        let mut st = AdamState::new(AdamConfig::default());
        adam_update(&mut layer, &mut st).unwrap();
        assert_eq!(layer.weight.data(), before.data());
        assert_eq!(st.step, 1);
        adam_update(&mut layer, &mut st).unwrap();
        assert_eq!(st.step, 2);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.02] {
            let mut p = scalar(1.0, g);
            let mut st = AdamState::new(AdamConfig { lr: 0.01, ..AdamConfig::default() });
            adam_update(&mut p, &mut st).unwrap();
            let moved = p.0.data()[0] - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-6, "{moved}");
        }
    }

    #[test]
    fn two_steps_follow_scalar_reference() {
        // Hand-rolled scalar Adam.
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let grads = [0.5f64, -1.5];
        let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }

        let mut p = scalar(2.0, grads[0]);
        let mut st = AdamState::new(AdamConfig { lr, beta1: b1, beta2: b2, eps });
        adam_update(&mut p, &mut st).unwrap();
        p.0.grad_mut().unwrap()[0] = grads[1];
        adam_update(&mut p, &mut st).unwrap();
        assert!((p.0.data()[0] - x).abs() < 1e-12);
        assert!(st.v[0][0] >= 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = scalar(1.0, f64::NAN);
        let mut st = AdamState::new(AdamConfig::default());
        let err = adam_update(&mut p, &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p.0.data()[0], 1.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut p = scalar(0.0, 30.0);
        let n = clip_global_norm(&mut p, 5.0);
        assert_eq!(n, 30.0);
        assert!((p.0.grad().unwrap()[0] - 5.0).abs() < 1e-12);
    }
}
