//! Spectrogram -> fixed-width embedding. The stub extractor mean-pools each
//! frequency bin over time, applies a seeded Gaussian projection and
//! L2-normalizes. Pre-computed embeddings come in through EMB1 files instead.

use std::path::PathBuf;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::augment::Spectrogram;
use crate::data::{AugTag, Domain};
use crate::error::{MudasError, Result};

/// One feature vector with its provenance tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Array1<f64>,
    pub domain: Domain,
    pub aug: AugTag,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorSpec {
    Stub { seed: u64, dim: usize },
    /// Embeddings computed elsewhere and loaded from an EMB1 file.
    File { path: PathBuf },
}

/// Seeded random projection from `bins` pooled magnitudes to `dim` features.
fn projection(seed: u64, bins: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Distinct bin counts get distinct streams of the same seed.
    rng.set_stream(bins as u64);
    Array2::from_shape_simple_fn((bins, dim), || rng.sample(StandardNormal))
}

pub fn extract(spec: &Spectrogram, ex: &ExtractorSpec, domain: Domain, aug: AugTag) -> Result<Embedding> {
    let (seed, dim) = match ex {
        ExtractorSpec::Stub { seed, dim } => (*seed, *dim),
        ExtractorSpec::File { .. } => {
            return Err(MudasError::Unsupported(
                "file-backed embeddings are loaded directly, not extracted",
            ))
        }
    };
    if dim == 0 {
        return Err(MudasError::config("embedding dim must be >= 1"));
    }
    let pooled = spec.grid().mean_axis(Axis(0)).expect("spectrogram has frames");
    let mut vector = pooled.dot(&projection(seed, spec.bins(), dim));
    let norm = vector.dot(&vector).sqrt();
    if norm > 0.0 {
        vector /= norm;
    }
    Ok(Embedding { vector, domain, aug })
}
