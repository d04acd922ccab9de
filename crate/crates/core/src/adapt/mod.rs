//! The adaptation engine.
//!
//! Each step forwards `[x_ss, x_ws, x_st, x_wt]` with BN statistics updated,
//! then `[x_ss, x_ws]` against the frozen statistics. The two source passes
//! are blended per element with random weights; the weak target
//! probabilities are rescaled toward the source class means and thresholded
//! per class into positive/negative pseudo-labels for the strong target
//! view.

mod loss;
mod step;

pub use loss::{
    align_distribution, bce, compute_thresholds, diversity_losses, interpolate_probs,
    interpolate_with, ramp_weight, source_losses, target_losses, target_terms, AlignmentStats,
    Diversity, Interpolated, LossBreakdown, PseudoLabelMasks, RampShape, TargetTerms,
    ThresholdVector, DEFAULT_EPS, PROB_CLAMP,
};
pub use step::{
    evaluate_step, train_step, LambdaDraw, PassModes, PseudoLabels, SourceBatch, StepEvaluation,
    StepOutcome, StepSettings, TargetBatch,
};

use std::fmt::Write as _;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::EmbeddingAugment;
use crate::data::{LabeledSet, UnlabeledSet};
use crate::error::{MudasError, Result};
use crate::nn::{AdamState, ClassifierConfig, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub batch_source: usize,
    pub batch_target: usize,
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub ramp: RampShape,
    pub diversity: Diversity,
    pub align_eps: f64,
    pub augment: EmbeddingAugment,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            tau_pos: 0.9,
            tau_neg: 0.9,
            batch_source: 64,
            batch_target: 64,
            epochs: 50,
            lr_max: 0.001,
            lr_min: 0.00025,
            ramp: RampShape::Cosine,
            diversity: Diversity::AsPrinted,
            align_eps: DEFAULT_EPS,
            augment: EmbeddingAugment::default(),
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_pos", self.tau_pos), ("tau_neg", self.tau_neg)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(MudasError::config(format!("{name} must lie in (0, 1], got {tau}")));
            }
        }
        if self.batch_source == 0 || self.batch_target == 0 {
            return Err(MudasError::config("batch sizes must be >= 1"));
        }
        if !(self.lr_min > 0.0) || self.lr_max < self.lr_min || !self.lr_max.is_finite() {
            return Err(MudasError::config("need 0 < lr_min <= lr_max"));
        }
        if !(self.align_eps > 0.0) {
            return Err(MudasError::config("align_eps must be > 0"));
        }
        self.augment.validate()
    }

    pub fn steps_per_epoch(&self, source_rows: usize) -> usize {
        source_rows.div_ceil(self.batch_source)
    }
}

/// Where the classifier parameters start.
#[derive(Debug, Clone)]
pub enum Init {
    /// Continue from an existing (typically source-trained) model.
    Pretrained(ParameterSet),
    Fresh(ClassifierConfig),
}

impl Init {
    pub(crate) fn into_params(self) -> Result<ParameterSet> {
        match self {
            Init::Pretrained(p) => Ok(p),
            Init::Fresh(cfg) => ParameterSet::init(&cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Per-epoch means of each loss term; `t` and `lr` are from the last step,
/// pseudo-label counts are summed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub l_ws: f64,
    pub l_ss: f64,
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_pos_div: f64,
    pub l_neg_div: f64,
    pub total: f64,
    pub t: f64,
    pub lr: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl EpochSummary {
    fn from_steps(epoch: usize, steps: &[StepRecord]) -> Self {
        let n = steps.len().max(1) as f64;
        let mean = |f: fn(&LossBreakdown) -> f64| steps.iter().map(|s| f(&s.loss)).sum::<f64>() / n;
        let last = steps.last();
        Self {
            epoch,
            steps: steps.len(),
            l_ws: mean(|l| l.l_ws),
            l_ss: mean(|l| l.l_ss),
            l_pos: mean(|l| l.l_pos),
            l_neg: mean(|l| l.l_neg),
            l_pos_div: mean(|l| l.l_pos_div),
            l_neg_div: mean(|l| l.l_neg_div),
            total: mean(|l| l.total),
            t: last.map_or(0.0, |s| s.loss.t),
            lr: last.map_or(0.0, |s| s.lr),
            positives: steps.iter().map(|s| s.loss.positives).sum(),
            negatives: steps.iter().map(|s| s.loss.negatives).sum(),
        }
    }

    pub fn log_line(&self) -> String {
        format!(
            "epoch={} steps={} l_ws={} l_ss={} l_pos={} l_neg={} l_pos_div={} l_neg_div={} total={} t={} lr={} positives={} negatives={}",
            self.epoch,
            self.steps,
            self.l_ws,
            self.l_ss,
            self.l_pos,
            self.l_neg,
            self.l_pos_div,
            self.l_neg_div,
            self.total,
            self.t,
            self.lr,
            self.positives,
            self.negatives
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptReport {
    pub source_rows: usize,
    pub target_rows: usize,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl AdaptReport {
    /// One `key=value` line per epoch.
    pub fn log(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source_rows={} target_rows={}", self.source_rows, self.target_rows);
        for e in &self.epochs {
            out.push_str(&e.log_line());
            out.push('\n');
        }
        out
    }
}

/// Shuffled index batches covering `0..n`.
pub(crate) fn shuffled_batches(n: usize, batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Draws the next `batch` target rows from `order`, wrapping around.
fn cyclic_take(order: &[usize], cursor: &mut usize, batch: usize) -> Vec<usize> {
    let take = batch.min(order.len());
    let out = (0..take).map(|j| order[(*cursor + j) % order.len()]).collect();
    *cursor = (*cursor + take) % order.len().max(1);
    out
}

fn check_shapes(source: &LabeledSet, target: &UnlabeledSet, params: &ParameterSet) -> Result<()> {
    if source.is_empty() {
        return Err(MudasError::EmptyInput("source set has no rows"));
    }
    if source.dim() != params.input_dim() {
        return Err(MudasError::shape("source embedding width", params.input_dim(), source.dim()));
    }
    if !target.is_empty() && target.dim() != params.input_dim() {
        return Err(MudasError::shape("target embedding width", params.input_dim(), target.dim()));
    }
    if source.num_classes() != params.num_classes() {
        return Err(MudasError::shape("label classes", params.num_classes(), source.num_classes()));
    }
    Ok(())
}

/// Adapts a classifier to the unlabeled `target` set while keeping it
/// anchored on the labeled `source` set.
///
/// Runs `epochs * ceil(n / batch_source)` steps. Source rows are reshuffled
/// every epoch; target batches are drawn cyclically from a per-epoch
/// shuffle. Optimizer moments start from zero.
pub fn adapt(
    source: &LabeledSet,
    target: &UnlabeledSet,
    cfg: &AdaptConfig,
    init: Init,
) -> Result<(ParameterSet, AdaptReport)> {
    cfg.validate()?;
    let mut params = init.into_params()?;
    check_shapes(source, target, &params)?;
    let mut report = AdaptReport {
        source_rows: source.len(),
        target_rows: target.len(),
        ..AdaptReport::default()
    };
    if cfg.epochs == 0 {
        return Ok((params, report));
    }
    params.optimizer = AdamState::zeros_like(&params);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = source.labels.to_f64();
    let x_source = &source.embeddings.rows;
    let x_target = &target.embeddings.rows;
    let total_steps = (cfg.epochs * cfg.steps_per_epoch(source.len())) as u64;
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        let batches = shuffled_batches(source.len(), cfg.batch_source, &mut rng);
        let mut target_order: Vec<usize> = (0..target.len()).collect();
        target_order.shuffle(&mut rng);
        let mut cursor = 0;
        let first = report.steps.len();
        for idx in batches {
            let x = x_source.select(Axis(0), &idx);
            let src = SourceBatch {
                weak: cfg.augment.weak_view(&x),
                strong: cfg.augment.strong_view(&x, &mut rng),
                labels: labels.select(Axis(0), &idx),
            };
            let tgt = if target.is_empty() {
                TargetBatch::empty(params.input_dim())
            } else {
                let t_idx = cyclic_take(&target_order, &mut cursor, cfg.batch_target);
                let xt = x_target.select(Axis(0), &t_idx);
                TargetBatch {
                    weak: cfg.augment.weak_view(&xt),
                    strong: cfg.augment.strong_view(&xt, &mut rng),
                }
            };
            let outcome = train_step(&mut params, &src, &tgt, cfg, step, total_steps, &mut rng)?;
            report.steps.push(StepRecord {
                epoch,
                step,
                lr: outcome.lr,
                loss: outcome.loss,
            });
            step += 1;
        }
        report
            .epochs
            .push(EpochSummary::from_steps(epoch, &report.steps[first..]));
    }
    Ok((params, report))
}
