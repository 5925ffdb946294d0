//! Minimal differentiable substrate: every layer caches what its backward
//! pass needs and accumulates parameter gradients into the tensors' gradient
//! slots. There is no general autodiff graph; models wire backward passes
//! explicitly.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod linear;
pub mod loss;
pub mod lstm;

pub use activation::{relu, sigmoid, tanh};
pub use adam::{adam_update, clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::{linear, Linear};
pub use loss::{cross_entropy, log_softmax, softmax};
pub use lstm::{lstm_step, LstmCell, LstmState};

use crate::tensor::{Real, Tensor};

/// Read-only and mutable traversal over named parameter tensors.
pub trait Parameters<T: Real> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }
}

/// Joins a prefix and a leaf name with a dot.
pub(crate) fn scoped(prefix: &str, name: &str) -> alloc::string::String {
    let mut s = alloc::string::String::with_capacity(prefix.len() + name.len() + 1);
    s.push_str(prefix);
    s.push('.');
    s.push_str(name);
    s
}
