use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::loss::{
    align_distribution, bce, compute_thresholds, interpolate_probs, interpolate_with, ramp_weight,
    target_terms, AlignmentStats, Diversity, LossBreakdown, PseudoLabelMasks, ThresholdVector,
};
use super::AdaptConfig;
use crate::error::{MudasError, Result};
use crate::nn::{adam_step, backward, cosine_lr, forward, BnMode, ForwardTrace, GradientSet, ParameterSet};
use crate::ProbMatrix;

/// Weak and strong views of labeled source rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub weak: Array2<f64>,
    pub strong: Array2<f64>,
    pub labels: Array2<f64>,
}

/// Weak and strong views of unlabeled target rows. May be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    pub weak: Array2<f64>,
    pub strong: Array2<f64>,
}

impl TargetBatch {
    pub fn empty(dim: usize) -> Self {
        Self {
            weak: Array2::zeros((0, dim)),
            strong: Array2::zeros((0, dim)),
        }
    }
}

/// BN handling of the two forward passes of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassModes {
    /// Pass over `[x_ss, x_ws, x_st, x_wt]`.
    pub combined: BnMode,
    /// Pass over `[x_ss, x_ws]`.
    pub source_only: BnMode,
}

impl Default for PassModes {
    fn default() -> Self {
        Self {
            combined: BnMode::UpdateStats,
            source_only: BnMode::FrozenStats,
        }
    }
}

/// Interpolation weights for the strong and weak source probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaDraw {
    Sample,
    Fixed { ss: Array2<f64>, ws: Array2<f64> },
}

/// Loss settings that stay fixed within one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub diversity: Diversity,
    pub align_eps: f64,
    /// Ramp weight on the target and diversity terms.
    pub t: f64,
}

impl StepSettings {
    pub fn from_config(cfg: &AdaptConfig, t: f64) -> Self {
        Self {
            tau_pos: cfg.tau_pos,
            tau_neg: cfg.tau_neg,
            diversity: cfg.diversity,
            align_eps: cfg.align_eps,
            t,
        }
    }
}

/// Pseudo-labeling state of one step. None of it receives gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    /// `None` when the target batch is empty.
    pub alignment: Option<AlignmentStats>,
    pub y_tilde: ProbMatrix,
    pub thresholds: ThresholdVector,
    pub masks: PseudoLabelMasks,
}

/// Outcome of both forward passes and the loss, ready for backward.
#[derive(Debug, Clone)]
pub struct StepEvaluation {
    pub breakdown: LossBreakdown,
    pub pseudo: PseudoLabels,
    pub lambda_ss: Array2<f64>,
    pub lambda_ws: Array2<f64>,
    pub z_ss: ProbMatrix,
    pub z_ws: ProbMatrix,
    pub z_st: ProbMatrix,
    pub z_wt: ProbMatrix,
    combined: ForwardTrace,
    source_only: ForwardTrace,
    upstream_combined: Array2<f64>,
    upstream_source: Array2<f64>,
}

impl StepEvaluation {
    /// Gradient of the total loss, summed over both passes.
    pub fn gradient(&self, params: &ParameterSet) -> Result<GradientSet> {
        let mut grads = backward(&self.combined, params, self.upstream_combined.view())?;
        grads.add_assign(&backward(&self.source_only, params, self.upstream_source.view())?);
        Ok(grads)
    }
}

fn check_batches(params: &ParameterSet, source: &SourceBatch, target: &TargetBatch) -> Result<()> {
    let d = params.input_dim();
    let k = params.num_classes();
    if source.weak.nrows() == 0 {
        return Err(MudasError::EmptyInput("source batch has no rows"));
    }
    if source.weak.dim() != source.strong.dim() {
        return Err(MudasError::shape(
            "source views",
            format!("{:?}", source.weak.dim()),
            format!("{:?}", source.strong.dim()),
        ));
    }
    if target.weak.dim() != target.strong.dim() {
        return Err(MudasError::shape(
            "target views",
            format!("{:?}", target.weak.dim()),
            format!("{:?}", target.strong.dim()),
        ));
    }
    if source.weak.ncols() != d || target.weak.ncols() != d {
        return Err(MudasError::shape("embedding width", d, source.weak.ncols().max(target.weak.ncols())));
    }
    if source.labels.dim() != (source.weak.nrows(), k) {
        return Err(MudasError::shape(
            "source labels",
            format!("({}, {k})", source.weak.nrows()),
            format!("{:?}", source.labels.dim()),
        ));
    }
    Ok(())
}

/// Runs the two forward passes and evaluates every loss term.
///
/// With `frozen` given, its pseudo-labels, thresholds and masks are reused
/// instead of being derived from this evaluation's probabilities.
pub fn evaluate_step(
    params: &mut ParameterSet,
    source: &SourceBatch,
    target: &TargetBatch,
    settings: &StepSettings,
    modes: PassModes,
    lambda: &LambdaDraw,
    frozen: Option<&PseudoLabels>,
    rng: &mut impl Rng,
) -> Result<StepEvaluation> {
    check_batches(params, source, target)?;
    let n = source.weak.nrows();
    let m = target.weak.nrows();

    let combined_input = concatenate(
        Axis(0),
        &[source.strong.view(), source.weak.view(), target.strong.view(), target.weak.view()],
    )
    .expect("widths checked");
    let (z1, combined) = forward(params, combined_input.view(), modes.combined, rng)?;
    let source_input =
        concatenate(Axis(0), &[source.strong.view(), source.weak.view()]).expect("widths checked");
    let (z2, source_only) = forward(params, source_input.view(), modes.source_only, rng)?;

    let z_ss1 = z1.slice(s![..n, ..]).to_owned();
    let z_ws1 = z1.slice(s![n..2 * n, ..]).to_owned();
    let z_st = z1.slice(s![2 * n..2 * n + m, ..]).to_owned();
    let z_wt = z1.slice(s![2 * n + m.., ..]).to_owned();
    let z_ss2 = z2.slice(s![..n, ..]).to_owned();
    let z_ws2 = z2.slice(s![n.., ..]).to_owned();

    let (z_ss, lambda_ss, z_ws, lambda_ws) = match lambda {
        LambdaDraw::Sample => {
            let ss = interpolate_probs(&z_ss1, &z_ss2, rng)?;
            let ws = interpolate_probs(&z_ws1, &z_ws2, rng)?;
            (ss.probs, ss.lambda, ws.probs, ws.lambda)
        }
        LambdaDraw::Fixed { ss, ws } => (
            interpolate_with(&z_ss1, &z_ss2, ss)?,
            ss.clone(),
            interpolate_with(&z_ws1, &z_ws2, ws)?,
            ws.clone(),
        ),
    };

    let pseudo = match frozen {
        Some(p) => p.clone(),
        None => {
            let thresholds = compute_thresholds(&z_ws, settings.tau_pos, settings.tau_neg)?;
            let (alignment, y_tilde) = if m > 0 {
                let stats = AlignmentStats::from_batches(&z_ws, &z_wt)?;
                let y = align_distribution(&z_wt, &stats, settings.align_eps);
                (Some(stats), y)
            } else {
                (None, Array2::zeros(z_wt.dim()))
            };
            let masks = PseudoLabelMasks::new(&y_tilde, &thresholds)?;
            PseudoLabels {
                alignment,
                y_tilde,
                thresholds,
                masks,
            }
        }
    };

    let (l_ws, g_ws) = bce(&source.labels, &z_ws)?;
    let (l_ss, g_ss) = bce(&source.labels, &z_ss)?;
    let terms = target_terms(&pseudo.masks, &z_st, settings.diversity)?;
    let breakdown = LossBreakdown::new(
        l_ws,
        l_ss,
        &terms,
        settings.t,
        pseudo.masks.positives(),
        pseudo.masks.negatives(),
    );

    let t = settings.t;
    let mut upstream_combined = Array2::zeros(z1.dim());
    upstream_combined
        .slice_mut(s![..n, ..])
        .assign(&(&lambda_ss * &g_ss));
    upstream_combined
        .slice_mut(s![n..2 * n, ..])
        .assign(&(&lambda_ws * &g_ws));
    upstream_combined
        .slice_mut(s![2 * n..2 * n + m, ..])
        .assign(&((terms.grad_pos + terms.grad_neg + terms.grad_pos_div + terms.grad_neg_div) * t));
    let mut upstream_source = Array2::zeros(z2.dim());
    upstream_source
        .slice_mut(s![..n, ..])
        .assign(&(lambda_ss.mapv(|l| 1.0 - l) * &g_ss));
    upstream_source
        .slice_mut(s![n.., ..])
        .assign(&(lambda_ws.mapv(|l| 1.0 - l) * &g_ws));

    Ok(StepEvaluation {
        breakdown,
        pseudo,
        lambda_ss,
        lambda_ws,
        z_ss,
        z_ws,
        z_st,
        z_wt,
        combined,
        source_only,
        upstream_combined,
        upstream_source,
    })
}

/// What one optimizer step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: LossBreakdown,
    pub lr: f64,
}

/// One adaptation step: both passes, all six losses with ramp weight
/// `t(step)`, backward, and an Adam update at the cosine learning rate.
pub fn train_step(
    params: &mut ParameterSet,
    source: &SourceBatch,
    target: &TargetBatch,
    cfg: &AdaptConfig,
    step: u64,
    total_steps: u64,
    rng: &mut impl Rng,
) -> Result<StepOutcome> {
    let t = ramp_weight(step, total_steps, cfg.ramp)?;
    let lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)?;
    let settings = StepSettings::from_config(cfg, t);
    let eval = evaluate_step(
        params,
        source,
        target,
        &settings,
        PassModes::default(),
        &LambdaDraw::Sample,
        None,
        rng,
    )?;
    if !eval.breakdown.is_finite() {
        return Err(MudasError::NonFinite {
            name: "loss".into(),
            detail: format!("step {step}: {:?}", eval.breakdown),
        });
    }
    let grads = eval.gradient(params)?;
    adam_step(params, &grads, lr)?;
    Ok(StepOutcome {
        loss: eval.breakdown,
        lr,
    })
}
