use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// In-place ReLU, returning nothing; the output itself serves as the mask.
pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// `dy ⊙ 1[y > 0]` using the ReLU output `y`; subgradient 0 at the kink.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &mut Tensor<T>) {
    for (d, &o) in dy.data_mut().iter_mut().zip(y.data()) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

/// `dy ⊙ (1 - y²)` using the tanh output `y`.
pub fn tanh_backward<T: Real>(y: &Tensor<T>, dy: &mut Tensor<T>) {
    for (d, &o) in dy.data_mut().iter_mut().zip(y.data()) {
        *d *= T::one() - o * o;
    }
}
