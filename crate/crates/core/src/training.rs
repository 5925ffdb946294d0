//! Episodes, the hybrid objective, and the optimisation loop.
//!
//! The objective per image is
//! `CE(logits_T, y) + Σ_t (b_t - R)² / T - α Σ_t (R - b_t) log π(ℓ_t)`,
//! averaged over the batch, with `R ∈ {0, 1}` the terminal reward broadcast
//! to every step and the advantage `R - b_t` held constant.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{batches, sequential_batches, Dataset};
use crate::error::{Error, Result};
use crate::glimpse::Location;
use crate::models::{AttentionModel, LossWeights, Model, Rollout, Sampling};
use crate::nn::adam::{adam_update, clip_global_norm, AdamState};
use crate::nn::loss::{argmax, cross_entropy};
use crate::nn::Parameters;
use crate::rng::{stream, Domain, RunRng};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
    pub lr_decay: f64,
    /// Epochs without validation improvement before the learning rate decays.
    pub lr_patience: usize,
    pub min_lr: f64,
    pub clip_norm: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.01,
            batch_size: 128,
            max_epochs: 300,
            patience: 50,
            lr: 3e-4,
            seed: 1,
            lr_decay: 0.5,
            lr_patience: 20,
            min_lr: 1e-5,
            clip_norm: 5.0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid training config: {what}")));
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.lr > 0.0) || !(self.min_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must be in (0, 1]");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

/// Record of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub image_id: u64,
    pub label: usize,
    pub prediction: usize,
    pub reward: f64,
    pub locations: Vec<Location>,
    pub log_probs: Vec<f64>,
    pub baselines: Vec<f64>,
    pub logits: Vec<f64>,
}

impl EpisodeTrace {
    pub fn steps(&self) -> usize {
        self.locations.len()
    }
}

/// Splits a batched rollout into per-image traces; `ids[b]` names row `b`.
pub fn traces_from_rollout<T: Real>(rollout: &Rollout<T>, ids: &[u64]) -> Vec<EpisodeTrace> {
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    (0..rollout.batch())
        .map(|b| EpisodeTrace {
            image_id: ids[b],
            label: rollout.labels[b],
            prediction: rollout.predictions[b],
            reward: f(rollout.rewards[b]),
            locations: rollout.locations.iter().map(|s| s[b]).collect(),
            log_probs: rollout.log_probs.iter().map(|s| f(s[b])).collect(),
            baselines: rollout.baselines.iter().map(|s| f(s[b])).collect(),
            logits: rollout.logits.row(b).iter().map(|&v| f(v)).collect(),
        })
        .collect()
}

/// `-Σ_t (R - b_t)·log π_t`.
pub fn reinforce_loss(trace: &EpisodeTrace) -> f64 {
    -trace
        .baselines
        .iter()
        .zip(&trace.log_probs)
        .map(|(b, lp)| (trace.reward - b) * lp)
        .sum::<f64>()
}

/// `Σ_t (b_t - R)² / T`.
pub fn baseline_loss(trace: &EpisodeTrace) -> f64 {
    let t = trace.baselines.len().max(1) as f64;
    trace.baselines.iter().map(|b| (b - trace.reward) * (b - trace.reward)).sum::<f64>() / t
}

pub fn classification_loss(trace: &EpisodeTrace) -> Result<f64> {
    Ok(cross_entropy(&trace.logits, trace.label)?.0)
}

pub fn total_loss(trace: &EpisodeTrace, alpha: f64) -> Result<f64> {
    Ok(classification_loss(trace)? + baseline_loss(trace) + alpha * reinforce_loss(trace))
}

/// Batch-mean loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub classification: f64,
    pub baseline: f64,
    pub reinforce: f64,
}

impl LossParts {
    pub fn total(&self, alpha: f64) -> f64 {
        self.classification + self.baseline + alpha * self.reinforce
    }
}

/// Independent generator for one image of one epoch, so results do not
/// depend on how images are grouped into batches.
pub fn episode_rngs(seed: u64, domain: Domain, epoch: u64, ids: &[usize]) -> Vec<RunRng> {
    ids.iter().map(|&i| stream(seed, domain, epoch, i as u64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub parts: LossParts,
    pub batches: usize,
    /// Largest pre-clip gradient norm seen.
    pub max_grad_norm: f64,
}

struct BatchResult {
    parts: LossParts,
    correct: usize,
}

fn attention_batch(
    m: &mut AttentionModel<f32>,
    images: &[f32],
    labels: &[usize],
    rngs: &mut [RunRng],
    alpha: f64,
) -> Result<BatchResult> {
    let ro = m.rollout(images, labels, Sampling::Random(rngs), None, true)?;
    let mut parts = LossParts::default();
    let mut correct = 0;
    for (b, &(ce, bl, rl)) in crate::models::attention::loss_terms(&ro)?.iter().enumerate() {
        parts.classification += ce;
        parts.baseline += bl;
        parts.reinforce += rl;
        correct += (ro.predictions[b] == labels[b]) as usize;
    }
    m.backward(&ro, LossWeights::hybrid(alpha))?;
    Ok(BatchResult { parts, correct })
}

fn lenet_batch(net: &mut crate::models::LeNet<f32>, images: &[f32], labels: &[usize]) -> Result<BatchResult> {
    let batch = labels.len();
    let (logits, cache) = net.forward(images, batch)?;
    let c = logits.cols();
    let mut d = Vec::with_capacity(batch * c);
    let mut parts = LossParts::default();
    let mut correct = 0;
    for (b, &y) in labels.iter().enumerate() {
        let (loss, g) = cross_entropy(logits.row(b), y)?;
        parts.classification += loss as f64;
        correct += (argmax(logits.row(b)) == y) as usize;
        d.extend(g.into_iter().map(|v| v / batch as f32));
    }
    net.backward(&cache, &Tensor::from_vec(&[batch, c], d)?);
    Ok(BatchResult { parts, correct })
}

/// One pass over `train` in a seeded order with an Adam step per batch.
pub fn train_epoch(
    model: &mut Model<f32>,
    adam: &mut AdamState<f32>,
    train: &Dataset,
    cfg: &TrainConfig,
    epoch: u64,
) -> Result<EpochStats> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let order = batches(train.len(), cfg.batch_size, &mut stream(cfg.seed, Domain::Shuffle, epoch, 0));
    let mut parts = LossParts::default();
    let mut correct = 0;
    let mut max_norm: f64 = 0.0;
    for rows in &order {
        let (images, labels) = train.gather(rows);
        model.zero_grad();
        let r = match model {
            Model::Attention(m) => {
                let mut rngs = episode_rngs(cfg.seed, Domain::Train, epoch, rows);
                attention_batch(m, &images, &labels, &mut rngs, cfg.alpha)?
            }
            Model::Lenet { net, .. } => lenet_batch(net, &images, &labels)?,
        };
        parts.classification += r.parts.classification;
        parts.baseline += r.parts.baseline;
        parts.reinforce += r.parts.reinforce;
        correct += r.correct;
        let norm = clip_global_norm(model, cfg.clip_norm);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient norm in epoch {epoch}"),
            });
        }
        max_norm = max_norm.max(norm);
        adam_update(model, adam)?;
    }
    let n = train.len() as f64;
    let parts = LossParts {
        classification: parts.classification / n,
        baseline: parts.baseline / n,
        reinforce: parts.reinforce / n,
    };
    Ok(EpochStats {
        loss: parts.total(cfg.alpha),
        accuracy: correct as f64 / n,
        parts,
        batches: order.len(),
        max_grad_norm: max_norm,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub traces: Vec<EpisodeTrace>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// One rollout per image with generators seeded by image index; the
/// prediction is the argmax of the final logits. Traces are kept for the
/// first `keep_traces` images.
pub fn evaluate(model: &Model<f32>, ds: &Dataset, seed: u64, batch_size: usize, keep_traces: usize) -> Result<Evaluation> {
    let mut correct = 0;
    let mut traces = Vec::new();
    for rows in sequential_batches(ds.len(), batch_size) {
        let (images, labels) = ds.gather(&rows);
        let preds = match model {
            Model::Attention(m) => {
                let mut rngs = episode_rngs(seed, Domain::Eval, 0, &rows);
                let ro = m.rollout(&images, &labels, Sampling::Random(&mut rngs), None, false)?;
                if traces.len() < keep_traces {
                    let ids: Vec<u64> = rows.iter().map(|&r| r as u64).collect();
                    let want = keep_traces - traces.len();
                    traces.extend(traces_from_rollout(&ro, &ids).into_iter().take(want));
                }
                ro.predictions
            }
            Model::Lenet { net, .. } => {
                let (logits, _) = net.forward(&images, rows.len())?;
                (0..rows.len()).map(|b| argmax(logits.row(b))).collect()
            }
        };
        correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(Evaluation {
        correct,
        total: ds.len(),
        traces,
    })
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement, never going below `min_lr`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    wait: usize,
}

impl Plateau {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Self {
        Plateau {
            factor,
            patience,
            min_lr,
            best: f64::NEG_INFINITY,
            wait: 0,
        }
    }

    /// Returns the new learning rate when it changes.
    pub fn observe(&mut self, metric: f64, lr: f64) -> Option<f64> {
        if metric > self.best {
            self.best = metric;
            self.wait = 0;
            return None;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            let next = (lr * self.factor).max(self.min_lr);
            if next < lr {
                return Some(next);
            }
        }
        None
    }
}

/// Stops after `patience` consecutive epochs without a strictly better
/// metric.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Feeds the metric of `epoch`; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, bool) {
        if metric > self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub parts: LossParts,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best: Model<f32>,
    pub stopped_early: bool,
}

/// Trains until `max_epochs` or early stopping, tracking the model with the
/// best validation accuracy. `on_epoch` sees every record together with the
/// current model and optimiser (for logging and checkpointing).
pub fn fit(
    model: &mut Model<f32>,
    adam: &mut AdamState<f32>,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Model<f32>, &AdamState<f32>) -> Result<()>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut plateau = Plateau::new(cfg.lr_decay, cfg.lr_patience, cfg.min_lr);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let lr = adam.lr();
        let stats = train_epoch(model, adam, train, cfg, epoch as u64)?;
        let val_acc = evaluate(model, val, cfg.seed, cfg.batch_size, 0)?.accuracy();
        let (improved, stop) = stopper.observe(epoch, val_acc);
        if improved {
            best = model.clone();
        }
        if let Some(next) = plateau.observe(val_acc, lr) {
            adam.set_lr(next);
        }
        let rec = EpochRecord {
            epoch,
            train_loss: stats.loss,
            train_acc: stats.accuracy,
            val_acc,
            lr,
            parts: stats.parts,
            improved,
        };
        on_epoch(&rec, model, adam)?;
        history.push(rec);
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(FitOutcome {
        history,
        best_epoch: stopper.best_epoch,
        best_val_acc: stopper.best,
        best,
        stopped_early,
    })
}
