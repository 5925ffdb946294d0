//! Model assembly: the recurrent attention variants and the LeNet-5
//! reference, plus exact parameter accounting.

pub mod attention;
pub mod context;
pub mod lenet;
pub mod spec;

pub use attention::{
    baseline_hybrid, baseline_single, gaussian_log_prob, location_policy, AttentionModel, CoreStates, Frozen, Layer,
    LossWeights, Noise, PolicyOutput, Replay, Rollout, Sampling, StepOutput,
};
pub use context::ContextNet;
pub use lenet::LeNet;
pub use spec::{BaselineMode, ModelSpec, Variant};

use rand::Rng;

use crate::error::Result;
use crate::nn::Parameters;
use crate::tensor::{Real, Tensor};

/// Any trainable classifier the lab knows about.
#[derive(Clone, Debug)]
pub enum Model<T> {
    Attention(AttentionModel<T>),
    Lenet { spec: ModelSpec, net: LeNet<T> },
}

impl<T: Real> Model<T> {
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.variant {
            Variant::Lenet => {
                let net = LeNet::new(spec.image_size, spec.num_classes, rng);
                Model::Lenet { spec, net }
            }
            _ => Model::Attention(AttentionModel::new(spec, rng)?),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        match self {
            Model::Attention(m) => &m.spec,
            Model::Lenet { spec, .. } => spec,
        }
    }
}

impl<T: Real> Parameters<T> for Model<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        match self {
            Model::Attention(m) => m.visit(f),
            Model::Lenet { net, .. } => net.visit_named("lenet", f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        match self {
            Model::Attention(m) => m.visit_mut(f),
            Model::Lenet { net, .. } => net.visit_named_mut("lenet", f),
        }
    }
}

fn dense(input: usize, output: usize) -> usize {
    input * output + output
}

fn lstm(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden) + 4 * hidden
}

fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

/// Number of learnable scalars a model built from `spec` holds, computed
/// from layer shapes alone.
pub fn param_count(spec: &ModelSpec) -> usize {
    let c = spec.num_classes;
    if spec.variant == Variant::Lenet {
        let s = lenet::flat_side(spec.image_size);
        return conv(1, 6, 5) + conv(6, 16, 5) + dense(16 * s * s, 120) + dense(120, 84) + dense(84, c);
    }
    let h = spec.hidden;
    let d = spec.glimpse_dims;
    let mut n = dense(spec.glimpse.retina_len(), d.what)
        + dense(2, d.where_)
        + dense(d.what, d.out)
        + dense(d.where_, d.out)
        + lstm(d.out, h)
        + dense(h, 2)
        + dense(h, c)
        + dense(AttentionModel::<f32>::baseline_width(spec), 1);
    if spec.variant.is_two_layer() {
        n += lstm(h, h);
    }
    if spec.context_cnn {
        let [c1, c2, c3] = context::CONTEXT_CHANNELS;
        n += conv(1, c1, 3) + conv(c1, c2, 3) + conv(c2, c3, 3) + dense(c3 * context::CONTEXT_GRID * context::CONTEXT_GRID, h);
    }
    n
}
