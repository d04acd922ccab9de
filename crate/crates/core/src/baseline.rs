//! Supervised BCE training, used for the source-only lower bound and the
//! target-trained upper bound.

use ndarray::{concatenate, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapt::{bce, shuffled_batches, AdaptConfig, Init};
use crate::data::LabeledSet;
use crate::error::{MudasError, Result};
use crate::nn::{adam_step, backward, cosine_lr, forward, AdamState, BnMode, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub lr: f64,
}

impl EpochLoss {
    pub fn log_line(&self) -> String {
        format!("epoch={} steps={} loss={} lr={}", self.epoch, self.steps, self.loss, self.lr)
    }
}

/// Trains on labeled rows with BCE only. Each step forwards the weak and
/// strong views of a batch together, so batch statistics and
/// augmentation match the source side of adaptation. Uses the batch size,
/// epochs, learning-rate schedule, augmentation and seed of `cfg`.
pub fn train_supervised(set: &LabeledSet, cfg: &AdaptConfig, init: Init) -> Result<(ParameterSet, Vec<EpochLoss>)> {
    cfg.validate()?;
    let mut params = init.into_params()?;
    if set.is_empty() {
        return Err(MudasError::EmptyInput("training set has no rows"));
    }
    if set.dim() != params.input_dim() {
        return Err(MudasError::shape("embedding width", params.input_dim(), set.dim()));
    }
    if set.num_classes() != params.num_classes() {
        return Err(MudasError::shape("label classes", params.num_classes(), set.num_classes()));
    }
    let mut log = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((params, log));
    }
    params.optimizer = AdamState::zeros_like(&params);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = set.labels.to_f64();
    let x_all = &set.embeddings.rows;
    let total_steps = (cfg.epochs * cfg.steps_per_epoch(set.len())) as u64;
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        let mut lr = 0.0;
        let batches = shuffled_batches(set.len(), cfg.batch_source, &mut rng);
        let steps = batches.len();
        for idx in batches {
            let x = x_all.select(Axis(0), &idx);
            let y = labels.select(Axis(0), &idx);
            let strong = cfg.augment.strong_view(&x, &mut rng);
            let weak = cfg.augment.weak_view(&x);
            let input = concatenate(Axis(0), &[strong.view(), weak.view()]).expect("same width");
            let targets = concatenate(Axis(0), &[y.view(), y.view()]).expect("same width");
            let (z, trace) = forward(&mut params, input.view(), BnMode::UpdateStats, &mut rng)?;
            let (loss, grad) = bce(&targets, &z)?;
            if !loss.is_finite() {
                return Err(MudasError::NonFinite {
                    name: "loss".into(),
                    detail: format!("supervised step {step}: {loss}"),
                });
            }
            let grads = backward(&trace, &params, grad.view())?;
            lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)?;
            adam_step(&mut params, &grads, lr)?;
            sum += loss;
            step += 1;
        }
        log.push(EpochLoss {
            epoch,
            steps,
            loss: sum / steps as f64,
            lr,
        });
    }
    Ok((params, log))
}
