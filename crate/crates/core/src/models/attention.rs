//! Recurrent attention models.
//!
//! All three variants share one set of building blocks and differ only in
//! wiring:
//!
//! | variant | lower LSTM input | upper LSTM input | gaze policy reads | classifier reads |
//! |---------|------------------|------------------|-------------------|------------------|
//! | RAM     | glimpse          | –                | lower             | lower            |
//! | DRAM    | glimpse          | lower `h`        | upper             | lower            |
//! | MRAM    | glimpse          | lower `h`        | lower             | upper            |
//!
//! The location for step `t + 1` is sampled from the policy layer's state
//! at step `t`; the first location is uniform. Classification is read once,
//! after the last glimpse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::context::{ContextCache, ContextNet};
use super::spec::{BaselineMode, ModelSpec, Variant};
use crate::error::{Error, Result};
use crate::glimpse::{build_retina_batch, locations_tensor, GlimpseCache, GlimpseNet, Location};
use crate::nn::loss::{argmax, cross_entropy};
use crate::nn::lstm::LstmCache;
use crate::nn::{Linear, LstmCell, LstmState, Parameters};
use crate::tensor::{concat_cols, Real, Tensor};

/// Which recurrent layer a head is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Lower,
    Upper,
}

/// Log-density of a 2-D isotropic Gaussian with standard deviation `sigma`.
pub fn gaussian_log_prob(sample: [f64; 2], mean: [f64; 2], sigma: f64) -> f64 {
    let var = sigma * sigma;
    let (dx, dy) = (sample[0] - mean[0], sample[1] - mean[1]);
    let sq = dx * dx + dy * dy;
    -sq / (2.0 * var) - libm::log(2.0 * core::f64::consts::PI * var)
}

/// Where the policy's location samples come from.
pub enum Noise<'a, R> {
    /// Draw `mean + sigma·ε` with one generator per batch row.
    Sample(&'a mut [R]),
    /// Reuse recorded pre-clamp samples.
    Replay(&'a [[f64; 2]]),
    /// Take the mean itself (the `sigma → 0` limit).
    Mean,
}

#[derive(Clone, Debug)]
pub struct PolicyOutput<T> {
    /// Policy mean, `[batch, 2]`, always inside `(-1, 1)²`.
    pub mean: Tensor<T>,
    /// Pre-clamp samples.
    pub raw: Vec<[f64; 2]>,
    /// Samples clamped into `[-1, 1]²`.
    pub sample: Vec<Location>,
    /// Log-density of `raw` under `N(mean, sigma²·I)`.
    pub log_prob: Vec<T>,
}

/// Gaussian location policy with mean `tanh(W h + b)`.
pub fn location_policy<T: Real, R: Rng>(
    h: &Tensor<T>,
    head: &Linear<T>,
    sigma: f64,
    noise: Noise<'_, R>,
) -> Result<PolicyOutput<T>> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("policy sigma must be positive, got {sigma}")));
    }
    let mean = head.forward(h)?.map(|v| v.tanh());
    let b = mean.rows();
    let mut raw = Vec::with_capacity(b);
    let mut noise = noise;
    for r in 0..b {
        let mu = [mean.row(r)[0].to_f64().unwrap_or(0.0), mean.row(r)[1].to_f64().unwrap_or(0.0)];
        let s = match &mut noise {
            Noise::Sample(rngs) => {
                let rng = &mut rngs[r];
                let e0: f64 = StandardNormal.sample(rng);
                let e1: f64 = StandardNormal.sample(rng);
                [mu[0] + sigma * e0, mu[1] + sigma * e1]
            }
            Noise::Replay(samples) => samples[r],
            Noise::Mean => mu,
        };
        raw.push(s);
    }
    let log_prob = raw
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let mu = [mean.row(r)[0].to_f64().unwrap_or(0.0), mean.row(r)[1].to_f64().unwrap_or(0.0)];
            T::lit(gaussian_log_prob(*s, mu, sigma))
        })
        .collect();
    let sample = raw.iter().map(|s| Location::new(s[0], s[1])).collect();
    Ok(PolicyOutput {
        mean,
        raw,
        sample,
        log_prob,
    })
}

/// `b_t = W h + b` for a single hidden state.
pub fn baseline_single<T: Real>(h: &Tensor<T>, head: &Linear<T>) -> Result<Vec<T>> {
    Ok(head.forward(h)?.into_data())
}

/// `b_t = W [h¹ ‖ h²] + b`.
pub fn baseline_hybrid<T: Real>(h1: &Tensor<T>, h2: &Tensor<T>, head: &Linear<T>) -> Result<Vec<T>> {
    Ok(head.forward(&concat_cols(h1, h2)?)?.into_data())
}

/// Recurrent state of one or two layers, each `[batch, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreStates<T> {
    pub lower: LstmState<T>,
    pub upper: Option<LstmState<T>>,
}

/// Result of one glimpse step for a batch.
#[derive(Clone, Debug)]
pub struct StepOutput<T> {
    pub next_loc_mean: Vec<Location>,
    pub sampled_loc: Vec<Location>,
    pub raw_sample: Vec<[f64; 2]>,
    pub log_prob: Vec<T>,
    pub baseline: Vec<T>,
    pub states: CoreStates<T>,
}

#[derive(Clone, Debug)]
struct StepCache<T> {
    glimpse: GlimpseCache<T>,
    lower: LstmCache<T>,
    upper: Option<LstmCache<T>>,
    h_lower: Tensor<T>,
    h_upper: Option<Tensor<T>>,
    mean: Tensor<T>,
    baseline_in: Tensor<T>,
}

#[derive(Clone, Debug)]
struct RolloutCache<T> {
    steps: Vec<StepCache<T>>,
    context: Option<ContextCache<T>>,
    action_in: Tensor<T>,
}

/// Recorded random choices of a rollout; replaying them makes the rollout a
/// deterministic function of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub initial: Vec<Location>,
    /// `[T][batch]` pre-clamp policy samples.
    pub samples: Vec<Vec<[f64; 2]>>,
}

/// Quantities treated as constants by the losses: the reward, the
/// advantage `R - b_t` and the baseline head's input features.
#[derive(Clone, Debug)]
pub struct Frozen<T> {
    pub rewards: Vec<T>,
    pub advantages: Vec<Vec<T>>,
    pub baseline_inputs: Vec<Tensor<T>>,
}

pub enum Sampling<'a, R> {
    Random(&'a mut [R]),
    Replay(&'a Replay),
}

/// A batch of episodes, indexed `[step][batch row]`.
#[derive(Clone, Debug)]
pub struct Rollout<T> {
    pub labels: Vec<usize>,
    /// Glimpse locations `ℓ_1 … ℓ_T`.
    pub locations: Vec<Vec<Location>>,
    pub means: Vec<Vec<Location>>,
    pub raw_samples: Vec<Vec<[f64; 2]>>,
    pub log_probs: Vec<Vec<T>>,
    pub baselines: Vec<Vec<T>>,
    pub advantages: Vec<Vec<T>>,
    pub logits: Tensor<T>,
    pub predictions: Vec<usize>,
    pub rewards: Vec<T>,
    cache: Option<RolloutCache<T>>,
}

impl<T: Real> Rollout<T> {
    pub fn batch(&self) -> usize {
        self.labels.len()
    }

    pub fn steps(&self) -> usize {
        self.locations.len()
    }

    pub fn replay(&self) -> Replay {
        Replay {
            initial: self.locations.first().cloned().unwrap_or_default(),
            samples: self.raw_samples.clone(),
        }
    }

    /// Freezes the detached quantities at their current values.
    pub fn frozen(&self) -> Frozen<T> {
        Frozen {
            rewards: self.rewards.clone(),
            advantages: self.advantages.clone(),
            baseline_inputs: self
                .cache
                .as_ref()
                .map(|c| c.steps.iter().map(|s| s.baseline_in.clone()).collect())
                .unwrap_or_default(),
        }
    }
}

/// Relative weights of the three loss terms; the default objective is
/// `classification + baseline + alpha·reinforce`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub classification: f64,
    pub baseline: f64,
    pub reinforce: f64,
}

impl LossWeights {
    pub fn hybrid(alpha: f64) -> Self {
        LossWeights {
            classification: 1.0,
            baseline: 1.0,
            reinforce: alpha,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttentionModel<T> {
    pub spec: ModelSpec,
    pub glimpse: GlimpseNet<T>,
    /// RAM core, or the glimpse-fed layer of DRAM/MRAM.
    pub lower: LstmCell<T>,
    pub upper: Option<LstmCell<T>>,
    pub location: Linear<T>,
    pub action: Linear<T>,
    pub baseline: Linear<T>,
    pub context: Option<ContextNet<T>>,
}

impl<T: Real> AttentionModel<T> {
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        Self::check_spec(&spec)?;
        let h = spec.hidden;
        let glimpse = GlimpseNet::new(spec.glimpse.retina_len(), spec.glimpse_dims, rng);
        let lower = LstmCell::new(spec.glimpse_dims.out, h, rng);
        let upper = spec.variant.is_two_layer().then(|| LstmCell::new(h, h, rng));
        let location = Linear::new(h, 2, rng);
        let action = Linear::new(h, spec.num_classes, rng);
        let baseline = Linear::new(Self::baseline_width(&spec), 1, rng);
        let context = spec.context_cnn.then(|| ContextNet::new(h, rng));
        Ok(AttentionModel {
            spec,
            glimpse,
            lower,
            upper,
            location,
            action,
            baseline,
            context,
        })
    }

    /// Same shapes as [`AttentionModel::new`] with every parameter zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let mut rng = crate::rng::stream(0, crate::rng::Domain::Init, 0, 0);
        let mut m = Self::new(spec, &mut rng)?;
        m.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|v| *v = T::zero()));
        Ok(m)
    }

    fn check_spec(spec: &ModelSpec) -> Result<()> {
        spec.validate()?;
        if !spec.variant.is_attention() {
            return Err(Error::Config("LeNet is not an attention model".into()));
        }
        Ok(())
    }

    /// Input width of the baseline head. Two-layer models always allocate
    /// room for both states; in single mode the non-policy half reads zeros.
    pub fn baseline_width(spec: &ModelSpec) -> usize {
        if spec.variant.is_two_layer() {
            2 * spec.hidden
        } else {
            spec.hidden
        }
    }

    pub fn policy_layer(&self) -> Layer {
        match self.spec.variant {
            Variant::Dram => Layer::Upper,
            _ => Layer::Lower,
        }
    }

    pub fn action_layer(&self) -> Layer {
        match self.spec.variant {
            Variant::Mram => Layer::Upper,
            _ => Layer::Lower,
        }
    }

    fn pick<'s>(&self, layer: Layer, lower: &'s Tensor<T>, upper: Option<&'s Tensor<T>>) -> &'s Tensor<T> {
        match layer {
            Layer::Lower => lower,
            Layer::Upper => upper.expect("two-layer model"),
        }
    }

    /// Feature vector the baseline head reads.
    fn baseline_input(&self, lower: &Tensor<T>, upper: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        match (self.spec.variant.is_two_layer(), self.spec.baseline) {
            (false, _) => Ok(lower.clone()),
            (true, BaselineMode::Hybrid) => concat_cols(lower, upper.expect("two-layer")),
            (true, BaselineMode::Single) => {
                let upper = upper.expect("two-layer");
                let zeros = Tensor::zeros(lower.shape());
                match self.policy_layer() {
                    Layer::Lower => concat_cols(lower, &zeros),
                    Layer::Upper => concat_cols(&zeros, upper),
                }
            }
        }
    }

    /// Hybrid baseline on explicit states; a configuration error for RAM.
    pub fn baseline_hybrid(&self, h1: &Tensor<T>, h2: &Tensor<T>) -> Result<Vec<T>> {
        if !self.spec.variant.is_two_layer() {
            return Err(Error::Config(format!(
                "hybrid baseline needs two recurrent layers; {} has one",
                self.spec.variant.name()
            )));
        }
        baseline_hybrid(h1, h2, &self.baseline)
    }

    fn check_images(&self, images: &[T], batch: usize) -> Result<()> {
        let side = self.spec.image_size;
        if images.len() != batch * side * side {
            return Err(Error::Dimension {
                op: "rollout",
                detail: format!("{} pixels for {} images of {}x{}", images.len(), batch, side, side),
            });
        }
        Ok(())
    }

    /// Zero lower state; the upper state comes from the context network when
    /// DRAM has one, otherwise zero.
    pub fn initial_states(&self, images: &[T], batch: usize) -> Result<CoreStates<T>> {
        Ok(self.initial_states_cached(images, batch)?.0)
    }

    fn initial_states_cached(&self, images: &[T], batch: usize) -> Result<(CoreStates<T>, Option<ContextCache<T>>)> {
        self.check_images(images, batch)?;
        let h = self.spec.hidden;
        let lower = LstmState::zeros(batch, h);
        let (upper, cache) = match (&self.upper, &self.context) {
            (None, _) => (None, None),
            (Some(_), None) => (Some(LstmState::zeros(batch, h)), None),
            (Some(_), Some(ctx)) => {
                let (h0, cache) = ctx.forward(images, batch, self.spec.image_size)?;
                (
                    Some(LstmState {
                        h: h0,
                        c: Tensor::zeros(&[batch, h]),
                    }),
                    Some(cache),
                )
            }
        };
        Ok((CoreStates { lower, upper }, cache))
    }

    /// Glimpse features followed by the glimpse-fed LSTM: `H¹_t`.
    pub fn lower_step(&self, images: &[T], locs: &[Location], state: &LstmState<T>) -> Result<LstmState<T>> {
        let retina = build_retina_batch(images, self.spec.image_size, locs, &self.spec.glimpse);
        let (g, _) = self.glimpse.forward(&retina, &locations_tensor(locs))?;
        self.lower.step(&g, state)
    }

    /// Second LSTM layer fed by the first layer's hidden state: `H²_t`.
    pub fn upper_step(&self, h_lower: &Tensor<T>, state: &LstmState<T>) -> Result<LstmState<T>> {
        match &self.upper {
            Some(cell) => cell.step(h_lower, state),
            None => Err(Error::Config(format!("{} has no upper layer", self.spec.variant.name()))),
        }
    }

    /// One full glimpse step for a batch: sense, update the core(s), emit
    /// the next location and the baseline.
    pub fn step<R: Rng>(
        &self,
        images: &[T],
        locs: &[Location],
        states: &CoreStates<T>,
        noise: Noise<'_, R>,
    ) -> Result<StepOutput<T>> {
        self.check_images(images, locs.len())?;
        Ok(self.step_impl(images, locs, states, noise, None)?.0)
    }

    fn step_impl<R: Rng>(
        &self,
        images: &[T],
        locs: &[Location],
        states: &CoreStates<T>,
        noise: Noise<'_, R>,
        frozen_baseline_in: Option<&Tensor<T>>,
    ) -> Result<(StepOutput<T>, StepCache<T>)> {
        let retina = build_retina_batch(images, self.spec.image_size, locs, &self.spec.glimpse);
        let (g, glimpse_cache) = self.glimpse.forward(&retina, &locations_tensor(locs))?;
        let (lower_state, lower_cache) = self.lower.step_cached(&g, &states.lower)?;
        let (upper_state, upper_cache) = match (&self.upper, &states.upper) {
            (Some(cell), Some(st)) => {
                let (s, c) = cell.step_cached(&lower_state.h, st)?;
                (Some(s), Some(c))
            }
            (None, None) => (None, None),
            _ => {
                return Err(Error::Config("recurrent state does not match model layers".into()));
            }
        };
        let h_lower = lower_state.h.clone();
        let h_upper = upper_state.as_ref().map(|s| s.h.clone());
        let policy_h = self.pick(self.policy_layer(), &h_lower, h_upper.as_ref());
        let policy = location_policy(policy_h, &self.location, self.spec.policy_sigma, noise)?;
        let baseline_in = match frozen_baseline_in {
            Some(f) => f.clone(),
            None => self.baseline_input(&h_lower, h_upper.as_ref())?,
        };
        let baseline = self.baseline.forward(&baseline_in)?.into_data();
        let next_loc_mean = (0..policy.mean.rows())
            .map(|r| {
                let m = policy.mean.row(r);
                Location::new(m[0].to_f64().unwrap_or(0.0), m[1].to_f64().unwrap_or(0.0))
            })
            .collect();
        let out = StepOutput {
            next_loc_mean,
            sampled_loc: policy.sample,
            raw_sample: policy.raw,
            log_prob: policy.log_prob,
            baseline,
            states: CoreStates {
                lower: lower_state,
                upper: upper_state,
            },
        };
        let cache = StepCache {
            glimpse: glimpse_cache,
            lower: lower_cache,
            upper: upper_cache,
            h_lower,
            h_upper,
            mean: policy.mean,
            baseline_in,
        };
        Ok((out, cache))
    }

    /// Runs `num_glimpses` steps over a batch and classifies from the final
    /// state. `images` is `[batch, side, side]`.
    ///
    /// With `frozen`, rewards, advantages and baseline features are taken
    /// from it instead of being recomputed. `keep_cache` retains what
    /// [`AttentionModel::backward`] needs.
    pub fn rollout<R: Rng>(
        &self,
        images: &[T],
        labels: &[usize],
        sampling: Sampling<'_, R>,
        frozen: Option<&Frozen<T>>,
        keep_cache: bool,
    ) -> Result<Rollout<T>> {
        let batch = labels.len();
        self.check_images(images, batch)?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec.num_classes) {
            return Err(Error::Index {
                what: "class label",
                index: bad,
                size: self.spec.num_classes,
            });
        }
        let steps = self.spec.num_glimpses;
        let (mut states, context_cache) = self.initial_states_cached(images, batch)?;

        let mut sampling = sampling;
        let mut loc: Vec<Location> = match &mut sampling {
            Sampling::Random(rngs) => {
                if rngs.len() != batch {
                    return Err(Error::Dimension {
                        op: "rollout",
                        detail: format!("{} generators for batch of {}", rngs.len(), batch),
                    });
                }
                rngs.iter_mut().map(|r| Location::uniform(r)).collect()
            }
            Sampling::Replay(rep) => {
                if rep.initial.len() != batch || rep.samples.len() != steps {
                    return Err(Error::Dimension {
                        op: "rollout",
                        detail: "replay does not match batch or glimpse count".into(),
                    });
                }
                rep.initial.clone()
            }
        };

        let mut out = Rollout {
            labels: labels.to_vec(),
            locations: Vec::with_capacity(steps),
            means: Vec::with_capacity(steps),
            raw_samples: Vec::with_capacity(steps),
            log_probs: Vec::with_capacity(steps),
            baselines: Vec::with_capacity(steps),
            advantages: Vec::with_capacity(steps),
            logits: Tensor::zeros(&[batch, self.spec.num_classes]),
            predictions: Vec::new(),
            rewards: Vec::new(),
            cache: None,
        };
        let mut step_caches = Vec::with_capacity(if keep_cache { steps } else { 0 });
        for t in 0..steps {
            let noise = match &mut sampling {
                Sampling::Random(rngs) => Noise::Sample(&mut **rngs),
                Sampling::Replay(rep) => Noise::Replay(&rep.samples[t]),
            };
            let frozen_in = frozen.and_then(|f| f.baseline_inputs.get(t));
            let (step, cache) = self.step_impl(images, &loc, &states, noise, frozen_in)?;
            let finite = step.states.lower.h.all_finite()
                && step.states.upper.as_ref().is_none_or(|s| s.h.all_finite())
                && step.baseline.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite {
                    context: format!("rollout activations at step {}", t + 1),
                });
            }
            out.locations.push(core::mem::take(&mut loc));
            loc = step.sampled_loc.clone();
            out.means.push(step.next_loc_mean);
            out.raw_samples.push(step.raw_sample);
            out.log_probs.push(step.log_prob);
            out.baselines.push(step.baseline);
            states = step.states;
            if keep_cache {
                step_caches.push(cache);
            }
        }

        let action_in = self
            .pick(self.action_layer(), &states.lower.h, states.upper.as_ref().map(|s| &s.h))
            .clone();
        out.logits = self.action.forward(&action_in)?;
        if !out.logits.all_finite() {
            return Err(Error::NonFinite {
                context: format!("classification logits at step {}", steps),
            });
        }
        out.predictions = (0..batch).map(|b| argmax(out.logits.row(b))).collect();
        out.rewards = match frozen {
            Some(f) => f.rewards.clone(),
            None => out
                .predictions
                .iter()
                .zip(labels)
                .map(|(p, l)| if p == l { T::one() } else { T::zero() })
                .collect(),
        };
        out.advantages = match frozen {
            Some(f) => f.advantages.clone(),
            None => out
                .baselines
                .iter()
                .map(|bt| bt.iter().zip(&out.rewards).map(|(&b, &r)| r - b).collect())
                .collect(),
        };
        if keep_cache {
            out.cache = Some(RolloutCache {
                steps: step_caches,
                context: context_cache,
                action_in,
            });
        }
        Ok(out)
    }

    /// Accumulates into the gradient slots the gradient of the batch mean of
    /// `w_c·CE + w_b·baseline_loss + w_r·reinforce_loss`.
    ///
    /// The advantage and the baseline features are constants; the policy
    /// gradient reaches the recurrent layers only through the log-density
    /// of the recorded samples.
    pub fn backward(&mut self, rollout: &Rollout<T>, weights: LossWeights) -> Result<()> {
        let cache = rollout.cache.as_ref().ok_or_else(|| {
            Error::Config("rollout was run without keep_cache; cannot backpropagate".into())
        })?;
        let batch = rollout.batch();
        let steps = rollout.steps();
        let h = self.spec.hidden;
        let inv_b = 1.0 / batch as f64;
        let sigma2 = self.spec.policy_sigma * self.spec.policy_sigma;
        let two_layer = self.upper.is_some();

        let mut ext_lower: Vec<Tensor<T>> = (0..steps).map(|_| Tensor::zeros(&[batch, h])).collect();
        let mut ext_upper: Vec<Tensor<T>> = if two_layer {
            (0..steps).map(|_| Tensor::zeros(&[batch, h])).collect()
        } else {
            Vec::new()
        };
        let add_to = |ext_lower: &mut Vec<Tensor<T>>, ext_upper: &mut Vec<Tensor<T>>, layer: Layer, t: usize, g: &Tensor<T>| {
            let dst = match layer {
                Layer::Lower => &mut ext_lower[t],
                Layer::Upper => &mut ext_upper[t],
            };
            for (d, &v) in dst.data_mut().iter_mut().zip(g.data()) {
                *d += v;
            }
        };

        // classification at the final step
        if weights.classification != 0.0 {
            let c = self.spec.num_classes;
            let mut d_logits = vec![T::zero(); batch * c];
            let scale = T::lit(weights.classification * inv_b);
            for b in 0..batch {
                let (_, g) = cross_entropy(rollout.logits.row(b), rollout.labels[b])?;
                for (d, v) in d_logits[b * c..(b + 1) * c].iter_mut().zip(g) {
                    *d = v * scale;
                }
            }
            let d_logits = Tensor::from_vec(&[batch, c], d_logits)?;
            let dh = self.action.backward(&cache.action_in, &d_logits, true).expect("dx");
            let layer = self.action_layer();
            add_to(&mut ext_lower, &mut ext_upper, layer, steps - 1, &dh);
        }

        let policy_layer = self.policy_layer();
        for (t, sc) in cache.steps.iter().enumerate() {
            if weights.reinforce != 0.0 {
                let mut dz = vec![T::zero(); batch * 2];
                for b in 0..batch {
                    let coeff = -weights.reinforce * rollout.advantages[t][b].to_f64().unwrap_or(0.0) * inv_b;
                    for d in 0..2 {
                        let mu = sc.mean.row(b)[d].to_f64().unwrap_or(0.0);
                        let d_mu = coeff * (rollout.raw_samples[t][b][d] - mu) / sigma2;
                        dz[b * 2 + d] = T::lit(d_mu * (1.0 - mu * mu));
                    }
                }
                let dz = Tensor::from_vec(&[batch, 2], dz)?;
                let policy_h = self.pick(policy_layer, &sc.h_lower, sc.h_upper.as_ref()).clone();
                let dh = self.location.backward(&policy_h, &dz, true).expect("dx");
                add_to(&mut ext_lower, &mut ext_upper, policy_layer, t, &dh);
            }
            if weights.baseline != 0.0 {
                let scale = weights.baseline * 2.0 / steps as f64 * inv_b;
                let db: Vec<T> = (0..batch)
                    .map(|b| (rollout.baselines[t][b] - rollout.rewards[b]) * T::lit(scale))
                    .collect();
                let db = Tensor::from_vec(&[batch, 1], db)?;
                self.baseline.backward(&sc.baseline_in, &db, false);
            }
        }

        // backpropagation through time
        let mut carry_h1 = Tensor::zeros(&[batch, h]);
        let mut carry_c1 = Tensor::zeros(&[batch, h]);
        let mut carry_h2 = Tensor::zeros(&[batch, h]);
        let mut carry_c2 = Tensor::zeros(&[batch, h]);
        for t in (0..steps).rev() {
            let sc = &cache.steps[t];
            let mut dh1 = ext_lower[t].clone();
            if let (Some(cell), Some(uc)) = (self.upper.as_mut(), sc.upper.as_ref()) {
                let mut dh2 = ext_upper[t].clone();
                for (d, &v) in dh2.data_mut().iter_mut().zip(carry_h2.data()) {
                    *d += v;
                }
                let (dx2, dh2p, dc2p) = cell.backward(uc, &dh2, &carry_c2);
                for (d, &v) in dh1.data_mut().iter_mut().zip(dx2.data()) {
                    *d += v;
                }
                carry_h2 = dh2p;
                carry_c2 = dc2p;
            }
            for (d, &v) in dh1.data_mut().iter_mut().zip(carry_h1.data()) {
                *d += v;
            }
            let (dg, dh1p, dc1p) = self.lower.backward(&sc.lower, &dh1, &carry_c1);
            carry_h1 = dh1p;
            carry_c1 = dc1p;
            self.glimpse.backward(&sc.glimpse, &dg);
        }
        if let (Some(ctx), Some(cc)) = (self.context.as_mut(), cache.context.as_ref()) {
            ctx.backward(cc, &carry_h2);
        }
        Ok(())
    }
}

impl<T: Real> Parameters<T> for AttentionModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.glimpse.visit_named("glimpse", f);
        match &self.upper {
            None => self.lower.visit_named("core", f),
            Some(up) => {
                self.lower.visit_named("core1", f);
                up.visit_named("core2", f);
            }
        }
        self.location.visit_named("location", f);
        self.action.visit_named("action", f);
        self.baseline.visit_named("baseline", f);
        if let Some(ctx) = &self.context {
            ctx.visit_named("context", f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.glimpse.visit_named_mut("glimpse", f);
        match &mut self.upper {
            None => self.lower.visit_named_mut("core", f),
            Some(up) => {
                self.lower.visit_named_mut("core1", f);
                up.visit_named_mut("core2", f);
            }
        }
        self.location.visit_named_mut("location", f);
        self.action.visit_named_mut("action", f);
        self.baseline.visit_named_mut("baseline", f);
        if let Some(ctx) = &mut self.context {
            ctx.visit_named_mut("context", f);
        }
    }
}

/// Per-row loss terms of a rollout: `(classification, baseline, reinforce)`.
pub fn loss_terms<T: Real>(rollout: &Rollout<T>) -> Result<Vec<(f64, f64, f64)>> {
    let steps = rollout.steps() as f64;
    (0..rollout.batch())
        .map(|b| {
            let (ce, _) = cross_entropy(rollout.logits.row(b), rollout.labels[b])?;
            let r = rollout.rewards[b].to_f64().unwrap_or(f64::NAN);
            let mut base = 0.0;
            let mut reinforce = 0.0;
            for t in 0..rollout.steps() {
                let bt = rollout.baselines[t][b].to_f64().unwrap_or(f64::NAN);
                base += (bt - r) * (bt - r);
                reinforce -= rollout.advantages[t][b].to_f64().unwrap_or(f64::NAN)
                    * rollout.log_probs[t][b].to_f64().unwrap_or(f64::NAN);
            }
            Ok((ce.to_f64().unwrap_or(f64::NAN), base / steps, reinforce))
        })
        .collect()
}
