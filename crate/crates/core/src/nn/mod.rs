//! Dense multi-label classifier: `Linear -> BatchNorm -> ReLU -> Dropout`
//! per hidden layer, then `Linear -> sigmoid`. Backpropagation is written
//! out by hand against a recorded [`ForwardTrace`].

mod optim;

pub use optim::{adam_step, cosine_lr, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MudasError, Result};
use crate::ProbMatrix;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ClassifierConfig {
    /// Two hidden layers of 128 units, dropout 0.2.
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![128, 128],
            num_classes,
            dropout_rate: 0.2,
            seed: 0,
        }
    }

    pub fn with_hidden(mut self, hidden_dims: Vec<usize>) -> Self {
        self.hidden_dims = hidden_dims;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(MudasError::config("input_dim must be >= 1"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(MudasError::config("hidden layer widths must be >= 1"));
        }
        if self.num_classes == 0 {
            return Err(MudasError::config("num_classes must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(MudasError::config("dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.num_classes);
        w
    }
}

/// Weight is stored `fan_in x fan_out` so a batch maps as `x.dot(&weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// How batch normalization treats the current batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and fold them into the running stats.
    UpdateStats,
    /// Normalize with the running stats and leave them untouched.
    FrozenStats,
    /// Like `FrozenStats`, with dropout disabled.
    Inference,
}

/// All classifier state: trainable tensors, BN running statistics and the
/// Adam accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    config: ClassifierConfig,
    pub dense: Vec<Dense>,
    pub norms: Vec<BatchNorm>,
    pub optimizer: AdamState,
}

impl ParameterSet {
    /// Glorot-uniform weights, zero biases, unit BN scale.
    pub fn init(config: &ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let widths = config.widths();
        let dense = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-limit..limit)
                });
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self::from_parts(config.clone(), dense, None)
    }

    /// Assembles a parameter set from explicit tensors; `norms` defaults to
    /// fresh BN layers. Optimizer state starts at zero.
    pub fn from_parts(
        config: ClassifierConfig,
        dense: Vec<Dense>,
        norms: Option<Vec<BatchNorm>>,
    ) -> Result<Self> {
        config.validate()?;
        let dense: Vec<Dense> = dense
            .into_iter()
            .map(|d| Dense {
                weight: d.weight.as_standard_layout().into_owned(),
                bias: d.bias.as_standard_layout().into_owned(),
            })
            .collect();
        let widths = config.widths();
        if dense.len() != widths.len() - 1 {
            return Err(MudasError::shape("dense layers", widths.len() - 1, dense.len()));
        }
        for (layer, w) in dense.iter().zip(widths.windows(2)) {
            if layer.weight.dim() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(MudasError::shape(
                    "dense layer",
                    format!("{}x{}", w[0], w[1]),
                    format!("{:?}", layer.weight.dim()),
                ));
            }
        }
        let norms = match norms {
            Some(n) => n,
            None => config.hidden_dims.iter().map(|&w| BatchNorm::new(w)).collect(),
        };
        if norms.len() != config.hidden_dims.len()
            || norms
                .iter()
                .zip(&config.hidden_dims)
                .any(|(n, &w)| n.gamma.len() != w || n.running_var.len() != w)
        {
            return Err(MudasError::shape(
                "batch norm layers",
                format!("{:?}", config.hidden_dims),
                norms.len(),
            ));
        }
        if norms.iter().any(|n| n.running_var.iter().any(|&v| !(v > 0.0))) {
            return Err(MudasError::config("running variance must be > 0"));
        }
        let mut params = Self {
            config,
            dense,
            norms,
            optimizer: AdamState::default(),
        };
        params.optimizer = AdamState::zeros_like(&params);
        Ok(params)
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Trainable tensors in declaration order: for each layer its weight
    /// and bias, then (hidden layers only) BN gamma and beta.
    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, d) in self.dense.iter().enumerate() {
            out.push((format!("dense{l}.weight"), d.weight.as_slice().unwrap()));
            out.push((format!("dense{l}.bias"), d.bias.as_slice().unwrap()));
            if let Some(n) = self.norms.get(l) {
                out.push((format!("norm{l}.gamma"), n.gamma.as_slice().unwrap()));
                out.push((format!("norm{l}.beta"), n.beta.as_slice().unwrap()));
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for d in self.dense.iter_mut() {
            out.push(d.weight.as_slice_mut().unwrap());
            out.push(d.bias.as_slice_mut().unwrap());
            if let Some(n) = norms.next() {
                out.push(n.gamma.as_slice_mut().unwrap());
                out.push(n.beta.as_slice_mut().unwrap());
            }
        }
        out
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|(_, t)| t.len()).sum()
    }

    /// Inference-mode probabilities; no state is touched.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<ProbMatrix> {
        let mut scratch = self.clone();
        // Inference never draws from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(forward(&mut scratch, x, BnMode::Inference, &mut rng)?.0)
    }
}

/// Gradients with the same tensor layout as the trainable part of a
/// [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub dense: Vec<Dense>,
    pub gamma: Vec<Array1<f64>>,
    pub beta: Vec<Array1<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self {
            dense: params
                .dense
                .iter()
                .map(|d| Dense::zeros(d.weight.nrows(), d.weight.ncols()))
                .collect(),
            gamma: params.norms.iter().map(|n| Array1::zeros(n.gamma.len())).collect(),
            beta: params.norms.iter().map(|n| Array1::zeros(n.beta.len())).collect(),
        }
    }

    /// Same order as [`ParameterSet::trainable`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (l, d) in self.dense.iter().enumerate() {
            out.push(d.weight.as_slice().unwrap());
            out.push(d.bias.as_slice().unwrap());
            if l < self.gamma.len() {
                out.push(self.gamma[l].as_slice().unwrap());
                out.push(self.beta[l].as_slice().unwrap());
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        for (a, b) in self.gamma.iter_mut().zip(&other.gamma) {
            *a += b;
        }
        for (a, b) in self.beta.iter_mut().zip(&other.beta) {
            *a += b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct NormTrace {
    mean: Array1<f64>,
    inv_std: Array1<f64>,
    normalized: Array2<f64>,
    batch_stats: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct HiddenTrace {
    input: Array2<f64>,
    norm: NormTrace,
    /// `true` where the post-BN activation was positive.
    active: Array2<bool>,
    /// Inverted-dropout multipliers (0 or 1/keep); `None` when disabled.
    dropout: Option<Array2<f64>>,
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    hidden: Vec<HiddenTrace>,
    head_input: Array2<f64>,
    output: ProbMatrix,
    mode: BnMode,
}

impl ForwardTrace {
    pub fn output(&self) -> &ProbMatrix {
        &self.output
    }

    pub fn mode(&self) -> BnMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.output.nrows()
    }

    /// Recomputes the output from the recorded input, BN statistics and
    /// dropout masks.
    pub fn replay(&self, params: &ParameterSet) -> Result<ProbMatrix> {
        self.check_params(params)?;
        let mut act = match self.hidden.first() {
            Some(h) => h.input.clone(),
            None => self.head_input.clone(),
        };
        for (l, h) in self.hidden.iter().enumerate() {
            let pre = act.dot(&params.dense[l].weight) + &params.dense[l].bias;
            let normalized = (pre - &h.norm.mean) * &h.norm.inv_std;
            act = affine_relu(&normalized, &params.norms[l]);
            if let Some(mask) = &h.dropout {
                act *= mask;
            }
        }
        let head = params.dense.last().unwrap();
        Ok(sigmoid_probs(act.dot(&head.weight) + &head.bias))
    }

    /// Smallest |pre-activation| over every ReLU in the pass. Finite
    /// difference checks need this away from zero.
    pub fn relu_margin(&self, params: &ParameterSet) -> f64 {
        self.hidden
            .iter()
            .zip(&params.norms)
            .flat_map(|(h, n)| {
                (&h.norm.normalized * &n.gamma + &n.beta)
                    .into_iter()
                    .map(f64::abs)
                    .collect::<Vec<_>>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn check_params(&self, params: &ParameterSet) -> Result<()> {
        if params.norms.len() != self.hidden.len()
            || self.head_input.ncols() != params.dense.last().unwrap().weight.nrows()
            || self.output.ncols() != params.num_classes()
            || self
                .hidden
                .iter()
                .zip(&params.dense)
                .any(|(h, d)| h.input.ncols() != d.weight.nrows())
        {
            return Err(MudasError::shape(
                "trace vs parameters",
                format!("{:?}", params.config.widths()),
                format!("trace with {} hidden layers", self.hidden.len()),
            ));
        }
        Ok(())
    }
}

fn affine_relu(normalized: &Array2<f64>, norm: &BatchNorm) -> Array2<f64> {
    let mut y = normalized * &norm.gamma + &norm.beta;
    y.mapv_inplace(|v| v.max(0.0));
    y
}

/// Largest double below 1; keeps probabilities strictly inside (0, 1).
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

pub(crate) fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

fn sigmoid_probs(mut logits: Array2<f64>) -> ProbMatrix {
    logits.mapv_inplace(sigmoid);
    logits
}

/// Runs the classifier on `x`.
///
/// `UpdateStats` normalizes with batch statistics and moves the running
/// statistics toward them (momentum 0.9, unbiased batch variance).
/// `FrozenStats` uses the running statistics. `Inference` additionally
/// disables dropout. Dropout masks are drawn from `rng`.
pub fn forward(
    params: &mut ParameterSet,
    x: ArrayView2<'_, f64>,
    mode: BnMode,
    rng: &mut impl Rng,
) -> Result<(ProbMatrix, ForwardTrace)> {
    if x.ncols() != params.input_dim() {
        return Err(MudasError::shape("forward input width", params.input_dim(), x.ncols()));
    }
    if x.nrows() == 0 {
        return Err(MudasError::EmptyInput("forward batch has no rows"));
    }
    let n = x.nrows() as f64;
    let keep = 1.0 - params.config.dropout_rate;
    let dropout_on = mode != BnMode::Inference && params.config.dropout_rate > 0.0;

    let mut act = x.to_owned();
    let mut hidden = Vec::with_capacity(params.norms.len());
    for l in 0..params.norms.len() {
        let pre = act.dot(&params.dense[l].weight) + &params.dense[l].bias;
        let norm = &mut params.norms[l];
        let (mean, inv_std, batch_stats) = match mode {
            BnMode::UpdateStats => {
                let mean = pre.mean_axis(Axis(0)).unwrap();
                let var = pre.var_axis(Axis(0), 0.0);
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let unbiased = if x.nrows() > 1 {
                    &var * (n / (n - 1.0))
                } else {
                    var.clone()
                };
                norm.running_mean = &norm.running_mean * BN_MOMENTUM + &mean * (1.0 - BN_MOMENTUM);
                norm.running_var = &norm.running_var * BN_MOMENTUM + &unbiased * (1.0 - BN_MOMENTUM);
                (mean, inv_std, true)
            }
            BnMode::FrozenStats | BnMode::Inference => (
                norm.running_mean.clone(),
                norm.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt()),
                false,
            ),
        };
        let normalized = (&pre - &mean) * &inv_std;
        let mut out = affine_relu(&normalized, norm);
        let active = out.mapv(|v| v > 0.0);
        let dropout = dropout_on.then(|| {
            Array2::from_shape_simple_fn(out.dim(), || {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        if let Some(mask) = &dropout {
            out *= mask;
        }
        hidden.push(HiddenTrace {
            input: act,
            norm: NormTrace {
                mean,
                inv_std,
                normalized,
                batch_stats,
            },
            active,
            dropout,
        });
        act = out;
    }
    let head = params.dense.last().unwrap();
    let output = sigmoid_probs(act.dot(&head.weight) + &head.bias);
    let trace = ForwardTrace {
        hidden,
        head_input: act,
        output: output.clone(),
        mode,
    };
    Ok((output, trace))
}

/// Backpropagates `upstream` (gradient of the loss with respect to the
/// output probabilities) through a recorded pass. Running statistics are
/// not trainable and receive nothing.
pub fn backward(
    trace: &ForwardTrace,
    params: &ParameterSet,
    upstream: ArrayView2<'_, f64>,
) -> Result<GradientSet> {
    trace.check_params(params)?;
    if upstream.dim() != trace.output.dim() {
        return Err(MudasError::shape(
            "upstream gradient",
            format!("{:?}", trace.output.dim()),
            format!("{:?}", upstream.dim()),
        ));
    }
    let mut grads = GradientSet::zeros_like(params);

    // d sigmoid = z (1 - z)
    let mut g = Zip::from(&upstream)
        .and(&trace.output)
        .map_collect(|&u, &z| u * z * (1.0 - z));

    let last = params.dense.len() - 1;
    grads.dense[last].weight = trace.head_input.t().dot(&g).as_standard_layout().into_owned();
    grads.dense[last].bias = g.sum_axis(Axis(0));
    if trace.hidden.is_empty() {
        return Ok(grads);
    }
    g = g.dot(&params.dense[last].weight.t());

    for l in (0..trace.hidden.len()).rev() {
        let h = &trace.hidden[l];
        if let Some(mask) = &h.dropout {
            g *= mask;
        }
        Zip::from(&mut g).and(&h.active).for_each(|v, &on| {
            if !on {
                *v = 0.0;
            }
        });
        let xhat = &h.norm.normalized;
        grads.gamma[l] = (&g * xhat).sum_axis(Axis(0));
        grads.beta[l] = g.sum_axis(Axis(0));
        let g_xhat = g * &params.norms[l].gamma;
        let g_pre = if h.norm.batch_stats {
            let n = g_xhat.nrows() as f64;
            let sum_g = g_xhat.sum_axis(Axis(0));
            let sum_gx = (&g_xhat * xhat).sum_axis(Axis(0));
            let centered = g_xhat * n - &sum_g - &(xhat * &sum_gx);
            centered * &(&h.norm.inv_std / n)
        } else {
            g_xhat * &h.norm.inv_std
        };
        grads.dense[l].weight = h.input.t().dot(&g_pre).as_standard_layout().into_owned();
        grads.dense[l].bias = g_pre.sum_axis(Axis(0));
        if l > 0 {
            g = g_pre.dot(&params.dense[l].weight.t());
        } else {
            g = g_pre;
        }
    }
    Ok(grads)
}
