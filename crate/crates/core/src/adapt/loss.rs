//! Pseudo-labeling and loss terms over probability matrices.
//!
//! Rows are samples and columns are classes throughout; "per class"
//! statistics are column statistics.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{MudasError, Result};
use crate::ProbMatrix;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any
/// logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Guards the alignment and D-score denominators.
pub const DEFAULT_EPS: f64 = 1e-8;

fn clamp(z: f64) -> f64 {
    z.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Derivative of the clamp: 0 where it saturates.
fn clamp_slope(z: f64) -> f64 {
    if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&z) {
        1.0
    } else {
        0.0
    }
}

fn same_shape(context: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(MudasError::shape(
            context,
            format!("{:?}", a.dim()),
            format!("{:?}", b.dim()),
        ));
    }
    Ok(())
}

/// Interpolated probabilities and the per-element weights that produced
/// them. The weights are needed again to split gradients between passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub probs: ProbMatrix,
    pub lambda: Array2<f64>,
}

/// `lambda * z' + (1 - lambda) * z''` with an independent
/// `lambda ~ U[0, 1]` per element.
pub fn interpolate_probs(
    z_prime: &ProbMatrix,
    z_double_prime: &ProbMatrix,
    rng: &mut impl Rng,
) -> Result<Interpolated> {
    same_shape("interpolation", z_prime, z_double_prime)?;
    let lambda = Array2::from_shape_simple_fn(z_prime.dim(), || rng.random::<f64>());
    let probs = interpolate_with(z_prime, z_double_prime, &lambda)?;
    Ok(Interpolated { probs, lambda })
}

/// Interpolation with caller-chosen weights.
pub fn interpolate_with(
    z_prime: &ProbMatrix,
    z_double_prime: &ProbMatrix,
    lambda: &Array2<f64>,
) -> Result<ProbMatrix> {
    same_shape("interpolation", z_prime, z_double_prime)?;
    same_shape("interpolation weights", z_prime, lambda)?;
    Ok(Zip::from(z_prime)
        .and(z_double_prime)
        .and(lambda)
        .map_collect(|&a, &b, &l| (l * a + (1.0 - l) * b).clamp(0.0, 1.0)))
}

/// Per-class batch means of the weak source and weak target probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentStats {
    pub mean_ws: Array1<f64>,
    pub mean_wt: Array1<f64>,
}

impl AlignmentStats {
    pub fn from_batches(z_ws: &ProbMatrix, z_wt: &ProbMatrix) -> Result<Self> {
        if z_ws.ncols() != z_wt.ncols() {
            return Err(MudasError::shape("alignment classes", z_ws.ncols(), z_wt.ncols()));
        }
        let mean_ws = z_ws
            .mean_axis(Axis(0))
            .ok_or(MudasError::EmptyInput("alignment needs weak source rows"))?;
        let mean_wt = z_wt
            .mean_axis(Axis(0))
            .ok_or(MudasError::EmptyInput("alignment needs weak target rows"))?;
        Ok(Self { mean_ws, mean_wt })
    }
}

/// Rescales target probabilities by the source/target mean ratio of their
/// class, capping at 1. The target mean is floored at `eps`.
pub fn align_distribution(z_wt: &ProbMatrix, stats: &AlignmentStats, eps: f64) -> ProbMatrix {
    let ratio = Zip::from(&stats.mean_ws)
        .and(&stats.mean_wt)
        .map_collect(|&s, &t| s / t.max(eps));
    let mut out = z_wt * &ratio;
    out.mapv_inplace(|v| v.min(1.0));
    out
}

/// Class-specific positive and negative cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    pub c_plus: Array1<f64>,
    pub c_minus: Array1<f64>,
    pub tau_pos: f64,
    pub tau_neg: f64,
}

/// `c+ = tau+ * max(z_ws)`, `c- = 1 - tau- * (1 - min(z_ws))` per class,
/// swapped where `c+ < c-`.
pub fn compute_thresholds(z_ws: &ProbMatrix, tau_pos: f64, tau_neg: f64) -> Result<ThresholdVector> {
    for tau in [tau_pos, tau_neg] {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(MudasError::config(format!("threshold parameter {tau} outside (0, 1]")));
        }
    }
    if z_ws.nrows() == 0 {
        return Err(MudasError::EmptyInput("thresholds need weak source rows"));
    }
    let k = z_ws.ncols();
    let mut c_plus = Array1::zeros(k);
    let mut c_minus = Array1::zeros(k);
    for (i, col) in z_ws.columns().into_iter().enumerate() {
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
        let pos = tau_pos * max;
        let neg = 1.0 - tau_neg * (1.0 - min);
        let (hi, lo) = if pos < neg { (neg, pos) } else { (pos, neg) };
        c_plus[i] = hi;
        c_minus[i] = lo;
    }
    Ok(ThresholdVector {
        c_plus,
        c_minus,
        tau_pos,
        tau_neg,
    })
}

/// Which target cells carry a positive / negative pseudo-label.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelMasks {
    pub positive: Array2<bool>,
    pub negative: Array2<bool>,
}

impl PseudoLabelMasks {
    pub fn new(y_tilde: &ProbMatrix, th: &ThresholdVector) -> Result<Self> {
        if y_tilde.ncols() != th.c_plus.len() {
            return Err(MudasError::shape("pseudo-label classes", th.c_plus.len(), y_tilde.ncols()));
        }
        let mut positive = Array2::from_elem(y_tilde.dim(), false);
        let mut negative = Array2::from_elem(y_tilde.dim(), false);
        for ((r, c), &y) in y_tilde.indexed_iter() {
            positive[[r, c]] = y >= th.c_plus[c];
            negative[[r, c]] = y <= th.c_minus[c];
        }
        Ok(Self { positive, negative })
    }

    pub fn positives(&self) -> usize {
        self.positive.iter().filter(|&&b| b).count()
    }

    pub fn negatives(&self) -> usize {
        self.negative.iter().filter(|&&b| b).count()
    }
}

/// Mean binary cross-entropy and its gradient with respect to `z`.
pub fn bce(y: &Array2<f64>, z: &ProbMatrix) -> Result<(f64, Array2<f64>)> {
    same_shape("binary cross-entropy", y, z)?;
    if z.is_empty() {
        return Ok((0.0, Array2::zeros(z.dim())));
    }
    let scale = 1.0 / z.len() as f64;
    let mut sum = 0.0;
    let grad = Zip::from(y).and(z).map_collect(|&y, &z| {
        let c = clamp(z);
        sum += y * c.ln() + (1.0 - y) * (1.0 - c).ln();
        -scale * (y / c - (1.0 - y) / (1.0 - c)) * clamp_slope(z)
    });
    Ok((-scale * sum, grad))
}

/// `(l_ws, l_ss)`: binary cross-entropy of the weak and strong source
/// probabilities against the source labels.
pub fn source_losses(y: &Array2<f64>, z_ws: &ProbMatrix, z_ss: &ProbMatrix) -> Result<(f64, f64)> {
    Ok((bce(y, z_ws)?.0, bce(y, z_ss)?.0))
}

/// Sign convention for the two diversity terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diversity {
    /// `+z log z` and `+(1-z) log(1-z)` over pseudo-labeled cells.
    AsPrinted,
    /// Both terms negated (entropy-style regularization).
    Negated,
    /// Both terms forced to zero.
    Off,
}

impl Diversity {
    fn sign(self) -> f64 {
        match self {
            Diversity::AsPrinted => 1.0,
            Diversity::Negated => -1.0,
            Diversity::Off => 0.0,
        }
    }
}

/// The four target-side terms and their gradients with respect to the
/// strong target probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTerms {
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_pos_div: f64,
    pub l_neg_div: f64,
    pub grad_pos: Array2<f64>,
    pub grad_neg: Array2<f64>,
    pub grad_pos_div: Array2<f64>,
    pub grad_neg_div: Array2<f64>,
}

/// Evaluates the masked target losses over `z_st`. Masks are constants.
pub fn target_terms(
    masks: &PseudoLabelMasks,
    z_st: &ProbMatrix,
    diversity: Diversity,
) -> Result<TargetTerms> {
    if masks.positive.dim() != z_st.dim() {
        return Err(MudasError::shape(
            "target losses",
            format!("{:?}", masks.positive.dim()),
            format!("{:?}", z_st.dim()),
        ));
    }
    let zeros = || Array2::zeros(z_st.dim());
    let mut out = TargetTerms {
        l_pos: 0.0,
        l_neg: 0.0,
        l_pos_div: 0.0,
        l_neg_div: 0.0,
        grad_pos: zeros(),
        grad_neg: zeros(),
        grad_pos_div: zeros(),
        grad_neg_div: zeros(),
    };
    if z_st.is_empty() {
        return Ok(out);
    }
    let scale = 1.0 / z_st.len() as f64;
    let sign = diversity.sign();
    for ((idx, &z), (&pos, &neg)) in z_st
        .indexed_iter()
        .zip(masks.positive.iter().zip(masks.negative.iter()))
    {
        let c = clamp(z);
        let slope = clamp_slope(z);
        if pos {
            out.l_pos -= c.ln();
            out.grad_pos[idx] = -scale / c * slope;
            if sign != 0.0 {
                out.l_pos_div += c * c.ln();
                out.grad_pos_div[idx] = sign * scale * (c.ln() + 1.0) * slope;
            }
        }
        if neg {
            out.l_neg -= (1.0 - c).ln();
            out.grad_neg[idx] = scale / (1.0 - c) * slope;
            if sign != 0.0 {
                out.l_neg_div += (1.0 - c) * (1.0 - c).ln();
                out.grad_neg_div[idx] = -sign * scale * ((1.0 - c).ln() + 1.0) * slope;
            }
        }
    }
    out.l_pos *= scale;
    out.l_neg *= scale;
    out.l_pos_div *= sign * scale;
    out.l_neg_div *= sign * scale;
    Ok(out)
}

/// `(l_pos, l_neg)` for pseudo-labels `y_tilde` under thresholds `th`.
pub fn target_losses(y_tilde: &ProbMatrix, z_st: &ProbMatrix, th: &ThresholdVector) -> Result<(f64, f64)> {
    let masks = PseudoLabelMasks::new(y_tilde, th)?;
    let t = target_terms(&masks, z_st, Diversity::Off)?;
    Ok((t.l_pos, t.l_neg))
}

/// `(l_pos_div, l_neg_div)` for pseudo-labels `y_tilde` under thresholds `th`.
pub fn diversity_losses(
    y_tilde: &ProbMatrix,
    z_st: &ProbMatrix,
    th: &ThresholdVector,
    diversity: Diversity,
) -> Result<(f64, f64)> {
    let masks = PseudoLabelMasks::new(y_tilde, th)?;
    let t = target_terms(&masks, z_st, diversity)?;
    Ok((t.l_pos_div, t.l_neg_div))
}

/// Shape of the weight that phases the target and diversity terms in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampShape {
    /// `0.5 - 0.5 cos(pi * min(1, 2 step / total))`
    Cosine,
    /// `min(1, 2 step / total)`
    Linear,
}

/// Time-dependent weight `t`: 0 at the first step, 1 from mid-training on.
pub fn ramp_weight(step: u64, total_steps: u64, shape: RampShape) -> Result<f64> {
    if total_steps == 0 {
        return Err(MudasError::config("total_steps must be >= 1"));
    }
    let progress = (2.0 * step as f64 / total_steps as f64).min(1.0);
    Ok(match shape {
        RampShape::Cosine => 0.5 - 0.5 * (PI * progress).cos(),
        RampShape::Linear => progress,
    })
}

/// Every term of one step's loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_ws: f64,
    pub l_ss: f64,
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_pos_div: f64,
    pub l_neg_div: f64,
    pub t: f64,
    pub total: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl LossBreakdown {
    /// Assembles the breakdown; `total = (l_ws + l_ss) + t * (target terms)`.
    pub fn new(l_ws: f64, l_ss: f64, target: &TargetTerms, t: f64, positives: usize, negatives: usize) -> Self {
        let total = (l_ws + l_ss) + t * (target.l_pos + target.l_neg + target.l_pos_div + target.l_neg_div);
        Self {
            l_ws,
            l_ss,
            l_pos: target.l_pos,
            l_neg: target.l_neg,
            l_pos_div: target.l_pos_div,
            l_neg_div: target.l_neg_div,
            t,
            total,
            positives,
            negatives,
        }
    }

    /// Recomputes the total from the recorded terms.
    pub fn recomputed_total(&self) -> f64 {
        (self.l_ws + self.l_ss) + self.t * (self.l_pos + self.l_neg + self.l_pos_div + self.l_neg_div)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.l_ws,
            self.l_ss,
            self.l_pos,
            self.l_neg,
            self.l_pos_div,
            self.l_neg_div,
            self.t,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = array![[0.2, 0.9]];
        let b = array![[0.6, 0.1]];
        assert_eq!(interpolate_with(&a, &b, &Array2::ones((1, 2))).unwrap(), a);
        assert_eq!(interpolate_with(&a, &b, &Array2::zeros((1, 2))).unwrap(), b);
        let mid = interpolate_with(&a, &b, &Array2::from_elem((1, 2), 0.5)).unwrap();
        assert_abs_diff_eq!(mid[[0, 0]], 0.4, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = interpolate_probs(&a, &a, &mut rng).unwrap();
        assert_abs_diff_eq!(same.probs, a, epsilon = 1e-15);
        assert!(interpolate_probs(&a, &array![[0.1]], &mut rng).is_err());
    }

    #[test]
    fn interpolation_draws_one_weight_per_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Array2::from_elem((50, 4), 0.5);
        let out = interpolate_probs(&z, &z, &mut rng).unwrap();
        let mut distinct: Vec<f64> = out.lambda.iter().copied().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 200);
        assert!(out.lambda.iter().all(|l| (0.0..1.0).contains(l)));
    }

    #[test]
    fn alignment_cases() {
        let z = array![[0.5, 0.0], [0.3, 0.7]];
        let same = AlignmentStats {
            mean_ws: array![0.3, 0.6],
            mean_wt: array![0.3, 0.6],
        };
        assert_eq!(align_distribution(&z, &same, 1e-8), z);
        let cap = AlignmentStats {
            mean_ws: array![0.4, 0.9],
            mean_wt: array![0.2, 0.1],
        };
        let out = align_distribution(&z, &cap, 1e-8);
        assert_eq!(out[[0, 0]], 1.0);
        let zero_mean = AlignmentStats {
            mean_ws: array![0.5, 0.5],
            mean_wt: array![0.0, 0.0],
        };
        assert!(align_distribution(&z, &zero_mean, 1e-8).iter().all(|v| v.is_finite()));
        assert_eq!(out[[0, 1]], 0.0);
        assert_eq!(out[[1, 1]], 1.0);
    }

    #[test]
    fn alignment_stats_need_rows() {
        let z = Array2::<f64>::zeros((0, 2));
        assert!(AlignmentStats::from_batches(&Array2::zeros((3, 2)), &z).is_err());
        let stats = AlignmentStats::from_batches(&array![[0.2], [0.4]], &array![[0.1]]).unwrap();
        assert_abs_diff_eq!(stats.mean_ws[0], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn thresholds_worked_cases() {
        let z = array![[1.0], [0.0], [0.5]];
        let th = compute_thresholds(&z, 0.9, 0.9).unwrap();
        assert_abs_diff_eq!(th.c_plus[0], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(th.c_minus[0], 0.1, epsilon = 1e-15);

        let flat = array![[0.4], [0.4]];
        let th = compute_thresholds(&flat, 1.0, 1.0).unwrap();
        assert_eq!((th.c_plus[0], th.c_minus[0]), (0.4, 0.4));

        let th = compute_thresholds(&flat, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(th.c_plus[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(th.c_minus[0], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn thresholds_reject_bad_input() {
        assert!(compute_thresholds(&Array2::zeros((0, 2)), 0.9, 0.9).is_err());
        assert!(compute_thresholds(&Array2::zeros((2, 2)), 0.0, 0.9).is_err());
        assert!(compute_thresholds(&Array2::zeros((2, 2)), 0.9, 1.5).is_err());
    }

    #[test]
    fn source_loss_cases() {
        let (l, _) = bce(&array![[1.0]], &array![[0.5]]).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
        let y = array![[1.0, 0.0]];
        let (l_ws, l_ss) = source_losses(&y, &array![[1.0, 0.0]], &array![[0.9, 0.2]]).unwrap();
        assert!(l_ws <= 1e-6);
        assert_abs_diff_eq!(l_ss, -(0.9f64.ln() + 0.8f64.ln()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l_ss, 0.1642, epsilon = 1e-4);
    }

    fn one_cell_threshold() -> ThresholdVector {
        ThresholdVector {
            c_plus: array![0.9],
            c_minus: array![0.1],
            tau_pos: 0.9,
            tau_neg: 0.9,
        }
    }

    #[test]
    fn target_loss_cases() {
        let th = one_cell_threshold();
        let (p, n) = target_losses(&array![[0.5]], &array![[0.5]], &th).unwrap();
        assert_eq!((p, n), (0.0, 0.0));
        let (p, n) = target_losses(&array![[1.0]], &array![[0.5]], &th).unwrap();
        assert_abs_diff_eq!(p, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(n, 0.0);
        let (p, n) = target_losses(&array![[0.0]], &array![[0.5]], &th).unwrap();
        assert_eq!(p, 0.0);
        assert_abs_diff_eq!(n, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn diversity_cases() {
        let th = one_cell_threshold();
        let (p, n) = diversity_losses(&array![[0.5]], &array![[0.3]], &th, Diversity::AsPrinted).unwrap();
        assert_eq!((p, n), (0.0, 0.0));
        let (p, _) = diversity_losses(&array![[1.0]], &array![[1.0]], &th, Diversity::AsPrinted).unwrap();
        assert!(p.abs() < 1e-6);
        let inv_e = (-1.0f64).exp();
        let (p, _) = diversity_losses(&array![[1.0]], &array![[inv_e]], &th, Diversity::AsPrinted).unwrap();
        assert_abs_diff_eq!(p, -inv_e, epsilon = 1e-12);
        let (q, _) = diversity_losses(&array![[1.0]], &array![[inv_e]], &th, Diversity::Negated).unwrap();
        assert_abs_diff_eq!(q, inv_e, epsilon = 1e-12);
        let (o, _) = diversity_losses(&array![[1.0]], &array![[inv_e]], &th, Diversity::Off).unwrap();
        assert_eq!(o, 0.0);
    }

    #[test]
    fn x_log_x_minimum_is_at_inverse_e() {
        // Scan the positive diversity term over z; the minimum sits at 1/e.
        let th = one_cell_threshold();
        let (best_z, best) = (1..1000)
            .map(|i| i as f64 / 1000.0)
            .map(|z| (z, diversity_losses(&array![[1.0]], &array![[z]], &th, Diversity::AsPrinted).unwrap().0))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best_z - (-1.0f64).exp()).abs() < 1e-3);
        assert_abs_diff_eq!(best, -(-1.0f64).exp(), epsilon = 1e-6);
    }

    /// Finite-difference check of every target-term gradient.
    #[test]
    fn target_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Array2<f64> = Array2::from_shape_simple_fn((5, 3), || rng.random_range(0.05..0.95));
        let masks = PseudoLabelMasks {
            positive: Array2::from_shape_simple_fn((5, 3), || rng.random_bool(0.5)),
            negative: Array2::from_shape_simple_fn((5, 3), || rng.random_bool(0.5)),
        };
        for div in [Diversity::AsPrinted, Diversity::Negated] {
            let terms = target_terms(&masks, &z, div).unwrap();
            let eps = 1e-6;
            for idx in [(0, 0), (2, 1), (4, 2), (3, 0)] {
                let mut up = z.clone();
                up[idx] += eps;
                let mut down = z.clone();
                down[idx] -= eps;
                let (a, b) = (target_terms(&masks, &up, div).unwrap(), target_terms(&masks, &down, div).unwrap());
                let fd = |f: fn(&TargetTerms) -> f64| (f(&a) - f(&b)) / (2.0 * eps);
                assert_abs_diff_eq!(terms.grad_pos[idx], fd(|t| t.l_pos), epsilon = 1e-7);
                assert_abs_diff_eq!(terms.grad_neg[idx], fd(|t| t.l_neg), epsilon = 1e-7);
                assert_abs_diff_eq!(terms.grad_pos_div[idx], fd(|t| t.l_pos_div), epsilon = 1e-7);
                assert_abs_diff_eq!(terms.grad_neg_div[idx], fd(|t| t.l_neg_div), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let y = array![[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        let z = array![[0.3, 0.6, 0.9], [0.2, 0.5, 0.45]];
        let (_, grad) = bce(&y, &z).unwrap();
        let eps = 1e-6;
        for idx in [(0, 0), (0, 1), (1, 2)] {
            let mut up = z.clone();
            up[idx] += eps;
            let mut down = z.clone();
            down[idx] -= eps;
            let fd = (bce(&y, &up).unwrap().0 - bce(&y, &down).unwrap().0) / (2.0 * eps);
            assert_abs_diff_eq!(grad[idx], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn ramp_cases() {
        assert_eq!(ramp_weight(0, 400, RampShape::Cosine).unwrap(), 0.0);
        assert_eq!(ramp_weight(200, 400, RampShape::Cosine).unwrap(), 1.0);
        assert_eq!(ramp_weight(399, 400, RampShape::Cosine).unwrap(), 1.0);
        assert_abs_diff_eq!(ramp_weight(100, 400, RampShape::Cosine).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(ramp_weight(100, 400, RampShape::Linear).unwrap(), 0.5);
        assert!(ramp_weight(0, 0, RampShape::Cosine).is_err());
        let mut prev = 0.0;
        for s in 0..=400 {
            let t = ramp_weight(s, 400, RampShape::Cosine).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }

    proptest! {
        #[test]
        fn thresholds_are_ordered(
            cells in proptest::collection::vec(0.0f64..=1.0, 1..40),
            tau_pos in 0.01f64..=1.0,
            tau_neg in 0.01f64..=1.0,
        ) {
            let k = 1 + cells.len() % 4;
            let rows = cells.len() / k;
            prop_assume!(rows >= 1);
            let z = Array2::from_shape_vec((rows, k), cells[..rows * k].to_vec()).unwrap();
            let th = compute_thresholds(&z, tau_pos, tau_neg).unwrap();
            for i in 0..k {
                prop_assert!(th.c_plus[i] >= th.c_minus[i]);
                prop_assert!((0.0..=1.0).contains(&th.c_plus[i]));
                prop_assert!((0.0..=1.0).contains(&th.c_minus[i]));
            }
        }

        #[test]
        fn alignment_stays_in_unit_interval(
            z in proptest::collection::vec(0.0f64..=1.0, 12),
            ws in proptest::collection::vec(0.0f64..=1.0, 3),
            wt in proptest::collection::vec(0.0f64..=1.0, 3),
        ) {
            let z = Array2::from_shape_vec((4, 3), z).unwrap();
            let stats = AlignmentStats { mean_ws: Array1::from(ws), mean_wt: Array1::from(wt) };
            let out = align_distribution(&z, &stats, DEFAULT_EPS);
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
