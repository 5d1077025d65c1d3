use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::macro_f1;
use crate::autodiff::Gradients;
use crate::data::LabeledSet;
use crate::error::{GleeError, Result};
use crate::model::{Inputs, Model, Session};
use crate::objectives::{loss_forward_backward, LossSpec};

use super::checkpoint::Checkpoint;
use super::optim::AdamW;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub freeze_backbone: bool,
    pub loss: LossSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-5,
            weight_decay: 0.0,
            grad_clip_norm: 1.0,
            max_epochs: 10,
            patience: 2,
            warmup_epochs: 1,
            seed: 0,
            freeze_backbone: false,
            loss: LossSpec::cross_entropy(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        use GleeError as E;
        if self.batch_size == 0 {
            return Err(E::config("batch_size", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(E::config("max_epochs", "must be positive"));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(E::config("patience", "must be in 1..=max_epochs"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(E::config("learning_rate", "must be finite and non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(E::config("weight_decay", "must be finite and non-negative"));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(E::config("grad_clip_norm", "must be positive"));
        }
        self.loss.validate()
    }
}

/// Scales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(GleeError::config("grad_clip_norm", "must be positive"));
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(norm)
}

/// Linear warmup: `lr · completed/warmup_steps` until warmup ends, then `lr`.
pub fn warmup_lr(lr: f64, completed_steps: u64, warmup_steps: u64) -> f64 {
    if completed_steps >= warmup_steps {
        lr
    } else {
        lr * completed_steps as f64 / warmup_steps as f64
    }
}

fn is_frozen(name: &str, freeze_backbone: bool, freeze_ln: bool) -> bool {
    (freeze_backbone && (name == "embedding" || name.starts_with("encoder.")))
        || (freeze_ln && name.starts_with("head.ln."))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_macro_f1: f64,
    pub dev_accuracy: f64,
    pub class_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
    pub steps: u64,
}

/// Parameters, optimizer and counters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub optimizer: AdamW,
    /// Completed epochs.
    pub epoch: usize,
    pub global_step: u64,
    pub best_metric: f64,
    pub best_epoch: usize,
}

impl TrainState {
    pub fn new(model: Model, config: &TrainConfig) -> Self {
        TrainState {
            model,
            optimizer: AdamW::new(config.weight_decay),
            epoch: 0,
            global_step: 0,
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
        }
    }

    /// One optimizer step on a batch at learning rate `lr`; returns the batch loss.
    pub fn step(&mut self, inputs: Inputs<'_>, targets: &[usize], lr: f64, config: &TrainConfig) -> Result<f64> {
        let (loss, mut grads) = {
            let mut session = Session::new(&self.model);
            let logits = session.forward(inputs)?;
            let (loss, dlogits) = loss_forward_backward(&logits, targets, &config.loss)?;
            if !loss.is_finite() {
                return Err(GleeError::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: 0,
                    loss,
                });
            }
            (loss, session.backward(&dlogits)?)
        };
        let freeze_ln = self.model.head.spec.freeze_ln;
        let frozen = |n: &str| is_frozen(n, config.freeze_backbone, freeze_ln);
        let frozen_names: Vec<String> = grads.names().filter(|n| frozen(n)).map(String::from).collect();
        for n in frozen_names {
            grads.remove(&n);
        }
        clip_gradients(&mut grads, config.grad_clip_norm)?;
        self.optimizer.step(self.model.params_mut(), &grads, lr, &frozen)?;
        self.global_step += 1;
        Ok(loss)
    }
}

fn batch_of(set: &LabeledSet, indices: &[usize]) -> LabeledSet {
    set.subset(indices)
}

/// Dev macro-F1 and accuracy.
fn dev_metrics(model: &Model, dev: &LabeledSet) -> Result<(f64, f64)> {
    let pred = model.predict(dev.as_inputs())?;
    let f1 = macro_f1(&dev.labels, &pred, model.num_classes())?;
    let correct = pred.iter().zip(&dev.labels).filter(|(p, g)| p == g).count();
    Ok((f1, correct as f64 / dev.len() as f64))
}

/// Mini-batch finetuning with warmup, clipping and early stopping on dev
/// macro-F1. Returns the best-dev parameters.
pub fn train(model: Model, train_set: &LabeledSet, dev: &LabeledSet, config: &TrainConfig) -> Result<(Model, TrainLog)> {
    let state = TrainState::new(model, config);
    resume(
        Checkpoint {
            state,
            best_model: None,
        },
        train_set,
        dev,
        config,
    )
}

/// Continues a run from a checkpoint; a fresh state starts from epoch 0.
pub fn resume(
    ckpt: Checkpoint,
    train_set: &LabeledSet,
    dev: &LabeledSet,
    config: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    config.validate()?;
    let Checkpoint { mut state, best_model } = ckpt;
    for set in [train_set, dev] {
        if set.num_classes != state.model.num_classes() {
            return Err(GleeError::Shape(format!(
                "corpus has {} classes, head predicts {}",
                set.num_classes,
                state.model.num_classes()
            )));
        }
        if set.is_empty() {
            return Err(GleeError::EmptyInput(0));
        }
    }
    let n = train_set.len();
    let steps_per_epoch = n.div_ceil(config.batch_size) as u64;
    let warmup_steps = steps_per_epoch * config.warmup_epochs as u64;
    let mut log = TrainLog {
        best_epoch: state.best_epoch,
        best_dev_macro_f1: state.best_metric,
        ..TrainLog::default()
    };
    let mut best_model = best_model.unwrap_or_else(|| state.model.clone());

    while state.epoch < config.max_epochs {
        let epoch = state.epoch;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = batch_of(train_set, chunk);
            let lr = warmup_lr(config.learning_rate, state.global_step, warmup_steps);
            let loss = state
                .step(batch.as_inputs(), &batch.labels, lr, config)
                .map_err(|e| match e {
                    GleeError::NonFiniteLoss { loss, .. } => GleeError::NonFiniteLoss { epoch, batch: b, loss },
                    other => other,
                })?;
            loss_sum += loss * chunk.len() as f64;
        }
        state.epoch += 1;

        let (f1, acc) = dev_metrics(&state.model, dev)?;
        log.epochs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / n as f64,
            dev_macro_f1: f1,
            dev_accuracy: acc,
            class_norms: state.model.class_norms()?,
        });
        if f1 > state.best_metric {
            state.best_metric = f1;
            state.best_epoch = epoch;
            best_model = state.model.clone();
        }
        if epoch - state.best_epoch >= config.patience {
            break;
        }
    }
    log.best_epoch = state.best_epoch;
    log.best_dev_macro_f1 = state.best_metric;
    log.steps = state.global_step;
    Ok((best_model, log))
}
