#![allow(dead_code)]

use rand::Rng;
use saccade_core::glimpse::{GlimpseConfig, GlimpseDims};
use saccade_core::models::{AttentionModel, BaselineMode, LossWeights, ModelSpec, Rollout, Sampling, Variant};
use saccade_core::nn::Parameters;
use saccade_core::rng::{stream, Domain, RunRng};

pub const SIDE: usize = 10;
pub const BATCH: usize = 3;
pub const CLASSES: usize = 3;

/// Tiny model of the given wiring, small enough for exhaustive checks.
pub fn tiny_spec(variant: Variant, baseline: BaselineMode, context: bool) -> ModelSpec {
    let mut s = ModelSpec::new(variant, SIDE, CLASSES);
    s.hidden = 5;
    s.num_glimpses = 3;
    s.glimpse = GlimpseConfig {
        patch_size: 4,
        num_scales: 2,
        scale_factor: 2,
    };
    s.glimpse_dims = GlimpseDims {
        what: 5,
        where_: 4,
        out: 6,
    };
    s.baseline = baseline;
    s.context_cnn = context;
    s.policy_sigma = 0.3;
    s
}

/// A model whose every parameter, biases included, is random.
pub fn random_model(spec: ModelSpec, seed: u64) -> AttentionModel<f64> {
    let mut rng = stream(seed, Domain::Init, 7, 0);
    let mut m = AttentionModel::<f64>::new(spec, &mut rng).unwrap();
    m.visit_mut(&mut |_, t| {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    });
    m
}

pub fn random_batch(seed: u64, batch: usize) -> (Vec<f64>, Vec<usize>) {
    let mut rng = stream(seed, Domain::Eval, 99, 0);
    let images = (0..batch * SIDE * SIDE).map(|_| rng.random_range(-1.0..2.0)).collect();
    let labels = (0..batch).map(|_| rng.random_range(0..CLASSES)).collect();
    (images, labels)
}

pub fn rngs(seed: u64, batch: usize) -> Vec<RunRng> {
    (0..batch).map(|i| stream(seed, Domain::Train, 0, i as u64)).collect()
}

pub fn flat_params(m: &AttentionModel<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    m.visit(&mut |_, t| out.extend_from_slice(t.data()));
    out
}

pub fn flat_grads(m: &AttentionModel<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    m.visit(&mut |_, t| match t.grad() {
        Some(g) => out.extend_from_slice(g),
        None => out.extend(std::iter::repeat_n(0.0, t.len())),
    });
    out
}

/// Parameter names aligned with [`flat_params`].
pub fn flat_names(m: &AttentionModel<f64>) -> Vec<String> {
    let mut out = Vec::new();
    m.visit(&mut |n, t| out.extend(std::iter::repeat_n(n.to_string(), t.len())));
    out
}

pub fn set_params(m: &mut AttentionModel<f64>, p: &[f64]) {
    let mut off = 0;
    m.visit_mut(&mut |_, t| {
        let n = t.len();
        t.data_mut().copy_from_slice(&p[off..off + n]);
        off += n;
    });
}

/// Batch-mean weighted objective of a rollout.
pub fn objective(ro: &Rollout<f64>, w: LossWeights) -> f64 {
    let terms = saccade_core::models::attention::loss_terms(ro).unwrap();
    terms
        .iter()
        .map(|(c, b, r)| w.classification * c + w.baseline * b + w.reinforce * r)
        .sum::<f64>()
        / terms.len() as f64
}

/// Runs a sampled rollout, backpropagates `w`, and returns the analytic
/// gradient together with a closure-ready replay of the same episode.
pub fn analytic_and_numeric_setup(
    m: &mut AttentionModel<f64>,
    images: &[f64],
    labels: &[usize],
    w: LossWeights,
) -> (Vec<f64>, Rollout<f64>) {
    let mut r = rngs(5, labels.len());
    let ro = m.rollout(images, labels, Sampling::Random(&mut r), None, true).unwrap();
    m.zero_grad();
    m.backward(&ro, w).unwrap();
    (flat_grads(m), ro)
}
