//! Flat `key=value` run configuration.
//!
//! One pair per line, `#` starts a comment. Unknown keys are rejected.
//! Every key has a default, so an empty file is a valid configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::adapt::{AdaptConfig, Diversity, RampShape};
use crate::data::SyntheticSpec;
use crate::error::{MudasError, Result};
use crate::nn::ClassifierConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub classes: usize,
    pub dim: usize,
    /// One value for every class, or one per class.
    pub prior: Vec<f64>,
    pub shift_angle: f64,
    pub shift_translation: f64,
    pub noise_sigma: f64,
    pub source_samples: usize,
    pub target_samples: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub batch_source: usize,
    pub batch_target: usize,
    pub epochs: usize,
    /// Epochs for the supervised baselines; defaults to `epochs`.
    pub baseline_epochs: Option<usize>,
    pub lr_max: f64,
    pub lr_min: f64,
    pub ramp: RampShape,
    pub diversity: Diversity,
    pub align_eps: f64,
    pub strong_masks: usize,
    pub strong_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = SyntheticSpec::default();
        let adapt = AdaptConfig::default();
        let net = ClassifierConfig::new(spec.dim, spec.classes);
        Self {
            seed: 0,
            classes: spec.classes,
            dim: spec.dim,
            prior: vec![spec.priors[0]],
            shift_angle: spec.shift_angle,
            shift_translation: spec.shift_translation,
            noise_sigma: spec.noise_sigma,
            source_samples: spec.source_samples,
            target_samples: spec.target_samples,
            hidden_dims: net.hidden_dims,
            dropout: net.dropout_rate,
            tau_pos: adapt.tau_pos,
            tau_neg: adapt.tau_neg,
            batch_source: adapt.batch_source,
            batch_target: adapt.batch_target,
            epochs: adapt.epochs,
            baseline_epochs: None,
            lr_max: adapt.lr_max,
            lr_min: adapt.lr_min,
            ramp: adapt.ramp,
            diversity: adapt.diversity,
            align_eps: adapt.align_eps,
            strong_masks: adapt.augment.num_masks,
            strong_width: adapt.augment.max_width_frac,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| MudasError::config(format!("cannot parse {key}={value}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn ramp_name(r: RampShape) -> &'static str {
    match r {
        RampShape::Cosine => "cosine",
        RampShape::Linear => "linear",
    }
}

fn diversity_name(d: Diversity) -> &'static str {
    match d {
        Diversity::AsPrinted => "as_printed",
        Diversity::Negated => "negated",
        Diversity::Off => "off",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MudasError::config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MudasError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` on top of `self`; later assignments win.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "prior" => self.prior = parse_list(key, value)?,
            "shift_angle" => self.shift_angle = parse(key, value)?,
            "shift_translation" => self.shift_translation = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "source_samples" => self.source_samples = parse(key, value)?,
            "target_samples" => self.target_samples = parse(key, value)?,
            "hidden_dims" => self.hidden_dims = parse_list(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "tau_pos" => self.tau_pos = parse(key, value)?,
            "tau_neg" => self.tau_neg = parse(key, value)?,
            "batch_source" => self.batch_source = parse(key, value)?,
            "batch_target" => self.batch_target = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "baseline_epochs" => {
                self.baseline_epochs = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "lr_max" => self.lr_max = parse(key, value)?,
            "lr_min" => self.lr_min = parse(key, value)?,
            "ramp" => {
                self.ramp = match value {
                    "cosine" => RampShape::Cosine,
                    "linear" => RampShape::Linear,
                    _ => return Err(MudasError::config(format!("ramp must be cosine or linear, got {value}"))),
                }
            }
            "diversity" => {
                self.diversity = match value {
                    "as_printed" => Diversity::AsPrinted,
                    "negated" => Diversity::Negated,
                    "off" => Diversity::Off,
                    _ => {
                        return Err(MudasError::config(format!(
                            "diversity must be as_printed, negated or off, got {value}"
                        )))
                    }
                }
            }
            "align_eps" => self.align_eps = parse(key, value)?,
            "strong_masks" => self.strong_masks = parse(key, value)?,
            "strong_width" => self.strong_width = parse(key, value)?,
            _ => return Err(MudasError::config(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    /// Parses `key=value` from a command-line override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| MudasError::config(format!("override {pair} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let priors = match self.prior.len() {
            1 => vec![self.prior[0]; self.classes],
            n if n == self.classes => self.prior.clone(),
            n => {
                return Err(MudasError::config(format!(
                    "prior lists {n} values for {} classes",
                    self.classes
                )))
            }
        };
        let spec = SyntheticSpec {
            classes: self.classes,
            dim: self.dim,
            priors,
            shift_angle: self.shift_angle,
            shift_translation: self.shift_translation,
            noise_sigma: self.noise_sigma,
            source_samples: self.source_samples,
            target_samples: self.target_samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Network shape for data of the given width and class count.
    pub fn classifier(&self, input_dim: usize, num_classes: usize) -> Result<ClassifierConfig> {
        let cfg = ClassifierConfig::new(input_dim, num_classes)
            .with_hidden(self.hidden_dims.clone())
            .with_dropout(self.dropout)
            .with_seed(self.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adapt_config(&self) -> Result<AdaptConfig> {
        let cfg = AdaptConfig {
            tau_pos: self.tau_pos,
            tau_neg: self.tau_neg,
            batch_source: self.batch_source,
            batch_target: self.batch_target,
            epochs: self.epochs,
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            ramp: self.ramp,
            diversity: self.diversity,
            align_eps: self.align_eps,
            augment: crate::augment::EmbeddingAugment {
                num_masks: self.strong_masks,
                max_width_frac: self.strong_width,
            },
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings for the supervised baselines.
    pub fn baseline_config(&self) -> Result<AdaptConfig> {
        Ok(AdaptConfig {
            epochs: self.baseline_epochs.unwrap_or(self.epochs),
            ..self.adapt_config()?
        })
    }

    /// Every key with its resolved value, one `key=value` per line, in a
    /// form [`RunConfig::parse`] accepts.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("seed", self.seed.to_string());
        kv("classes", self.classes.to_string());
        kv("dim", self.dim.to_string());
        kv("prior", join(&self.prior));
        kv("shift_angle", self.shift_angle.to_string());
        kv("shift_translation", self.shift_translation.to_string());
        kv("noise_sigma", self.noise_sigma.to_string());
        kv("source_samples", self.source_samples.to_string());
        kv("target_samples", self.target_samples.to_string());
        kv("hidden_dims", join(&self.hidden_dims));
        kv("dropout", self.dropout.to_string());
        kv("tau_pos", self.tau_pos.to_string());
        kv("tau_neg", self.tau_neg.to_string());
        kv("batch_source", self.batch_source.to_string());
        kv("batch_target", self.batch_target.to_string());
        kv("epochs", self.epochs.to_string());
        kv(
            "baseline_epochs",
            self.baseline_epochs.map_or("auto".into(), |e| e.to_string()),
        );
        kv("lr_max", self.lr_max.to_string());
        kv("lr_min", self.lr_min.to_string());
        kv("ramp", ramp_name(self.ramp).into());
        kv("diversity", diversity_name(self.diversity).into());
        kv("align_eps", self.align_eps.to_string());
        kv("strong_masks", self.strong_masks.to_string());
        kv("strong_width", self.strong_width.to_string());
        out
    }
}
