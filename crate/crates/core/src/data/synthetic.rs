//! Multi-label embeddings synthesized by prototype superposition, with an
//! optional rotation + translation of the prototypes on the target side.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AugTag, Domain, EmbeddingBatch, LabelMatrix, LabeledSet};
use crate::error::{MudasError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// Bernoulli prior of each class label.
    pub priors: Vec<f64>,
    /// Angle (radians) by which each target prototype is rotated away from
    /// its source position.
    pub shift_angle: f64,
    /// Length of the common offset added to every target prototype.
    pub shift_translation: f64,
    /// Per-dimension standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    pub source_samples: usize,
    pub target_samples: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            dim: 256,
            priors: vec![0.3; 6],
            shift_angle: 1.0,
            shift_translation: 0.5,
            noise_sigma: 0.2,
            source_samples: 500,
            target_samples: 500,
        }
    }
}

impl SyntheticSpec {
    pub fn with_classes(mut self, classes: usize, prior: f64) -> Self {
        self.classes = classes;
        self.priors = vec![prior; classes];
        self
    }

    pub fn without_shift(mut self) -> Self {
        self.shift_angle = 0.0;
        self.shift_translation = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 {
            return Err(MudasError::config("synthetic classes and dim must be >= 1"));
        }
        if self.priors.len() != self.classes {
            return Err(MudasError::config(format!(
                "{} priors given for {} classes",
                self.priors.len(),
                self.classes
            )));
        }
        // A zero prior is accepted so that all-negative sets can be produced.
        if self.priors.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(MudasError::config("synthetic priors must lie in [0, 1)"));
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return Err(MudasError::config("noise_sigma must be > 0"));
        }
        if !self.shift_angle.is_finite() || !self.shift_translation.is_finite() {
            return Err(MudasError::config("shift parameters must be finite"));
        }
        if self.source_samples == 0 || self.target_samples == 0 {
            return Err(MudasError::config("sample counts must be >= 1"));
        }
        Ok(())
    }
}

fn unit_gaussian(dim: usize, rng: &mut impl Rng) -> Array1<f64> {
    let v: Array1<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.dot(&v).sqrt();
    v / norm
}

/// The fixed geometry of one synthetic benchmark: source prototypes and
/// their shifted target counterparts.
#[derive(Debug, Clone)]
pub struct SyntheticDomains {
    spec: SyntheticSpec,
    source_prototypes: Array2<f64>,
    target_prototypes: Array2<f64>,
    seed: u64,
}

impl SyntheticDomains {
    pub fn new(spec: &SyntheticSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, d) = (spec.classes, spec.dim);
        let mut source_prototypes = Array2::zeros((k, d));
        for mut row in source_prototypes.rows_mut() {
            row.assign(&unit_gaussian(d, &mut rng));
        }
        let offset = unit_gaussian(d, &mut rng) * spec.shift_translation;
        let (sin, cos) = spec.shift_angle.sin_cos();
        let mut target_prototypes = Array2::zeros((k, d));
        for (src, mut dst) in source_prototypes.rows().into_iter().zip(target_prototypes.rows_mut()) {
            // Rotate within the plane spanned by the prototype and a random
            // direction orthogonal to it.
            let r = unit_gaussian(d, &mut rng);
            let r = &r - &(&src * src.dot(&r));
            let r = &r / r.dot(&r).sqrt();
            dst.assign(&(&src * cos + &r * sin + &offset));
        }
        Ok(Self {
            spec: spec.clone(),
            source_prototypes,
            target_prototypes,
            seed,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn prototypes(&self, domain: Domain) -> &Array2<f64> {
        match domain {
            Domain::Source => &self.source_prototypes,
            Domain::Target => &self.target_prototypes,
        }
    }

    /// Draws `n` labeled samples from one domain. The labels of target
    /// samples are meant for evaluation only.
    pub fn sample(&self, domain: Domain, n: usize, rng: &mut impl Rng) -> LabeledSet {
        let (k, d) = (self.spec.classes, self.spec.dim);
        let protos = self.prototypes(domain);
        let mut labels = Array2::<u8>::zeros((n, k));
        let mut rows = Array2::<f64>::zeros((n, d));
        for (mut label, mut row) in labels.rows_mut().into_iter().zip(rows.rows_mut()) {
            for (i, &prior) in self.spec.priors.iter().enumerate() {
                if rng.random::<f64>() < prior {
                    label[i] = 1;
                    row += &protos.row(i);
                }
            }
            for v in row.iter_mut() {
                let noise: f64 = rng.sample(StandardNormal);
                *v += self.spec.noise_sigma * noise;
            }
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        LabeledSet {
            embeddings: EmbeddingBatch::new(rows, domain, AugTag::None),
            labels: LabelMatrix::from_cells(labels).expect("generated labels are binary"),
        }
    }

    /// Deterministic generator for an extra draw (e.g. a held-out test
    /// split) that does not overlap the streams used by [`gen_synthetic`].
    pub fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Generates the default source/target pair: source samples on stream 1,
/// target samples on stream 2 of the seeded generator.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    let domains = SyntheticDomains::new(spec, seed)?;
    let source = domains.sample(Domain::Source, spec.source_samples, &mut domains.stream_rng(1));
    let target = domains.sample(Domain::Target, spec.target_samples, &mut domains.stream_rng(2));
    Ok((source, target))
}
