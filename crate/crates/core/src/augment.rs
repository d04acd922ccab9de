//! Weak (time reversal) and strong (SpecAugment band masking) augmentation.
//!
//! Training runs on embeddings, so [`EmbeddingAugment`] supplies the matching
//! views in embedding space: the weak view is the identity (time reversal
//! does not change a time-pooled embedding) and the strong view zeroes
//! random contiguous bands of feature dimensions.

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::data::io::{format_err, put_f32s, put_u32, read_file, write_file, ByteReader};
use crate::error::{FormatError, MudasError, Result};

pub const SPG1_MAGIC: &[u8; 4] = b"SPG1";

/// Time x frequency grid of non-negative magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    grid: Array2<f64>,
    frame_rate: f64,
}

impl Spectrogram {
    pub fn new(grid: Array2<f64>, frame_rate: f64) -> Result<Self> {
        if grid.nrows() == 0 || grid.ncols() == 0 {
            return Err(MudasError::EmptyInput("spectrogram needs >= 1 frame and bin"));
        }
        if grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(MudasError::config("spectrogram magnitudes must be finite and >= 0"));
        }
        if !(frame_rate > 0.0) || !frame_rate.is_finite() {
            return Err(MudasError::config("frame rate must be > 0"));
        }
        Ok(Self { grid, frame_rate })
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.grid
    }

    pub fn frames(&self) -> usize {
        self.grid.nrows()
    }

    pub fn bins(&self) -> usize {
        self.grid.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.grid * factor, self.frame_rate)
    }

    /// Frames in reverse order.
    pub fn time_reversed(&self) -> Self {
        Self {
            grid: self.grid.slice(s![..;-1, ..]).to_owned(),
            frame_rate: self.frame_rate,
        }
    }
}

/// Time-reverses with probability 0.5, otherwise returns a copy.
pub fn weak_augment(s: &Spectrogram, rng: &mut impl Rng) -> Spectrogram {
    if rng.random_bool(0.5) {
        s.time_reversed()
    } else {
        s.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecAugmentConfig {
    pub num_time_masks: usize,
    pub max_time_width: usize,
    pub num_freq_masks: usize,
    pub max_freq_width: usize,
}

impl SpecAugmentConfig {
    /// Two time and two frequency masks, each up to 10% of its axis.
    pub fn for_shape(frames: usize, bins: usize) -> Self {
        Self {
            num_time_masks: 2,
            max_time_width: frames / 10,
            num_freq_masks: 2,
            max_freq_width: bins / 10,
        }
    }

    pub fn validate_for(&self, s: &Spectrogram) -> Result<()> {
        if self.max_time_width > s.frames() || self.max_freq_width > s.bins() {
            return Err(MudasError::config(format!(
                "mask widths ({}, {}) exceed spectrogram shape ({}, {})",
                self.max_time_width,
                self.max_freq_width,
                s.frames(),
                s.bins()
            )));
        }
        Ok(())
    }
}

/// Zeroed bands chosen by one strong augmentation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskBands {
    pub time: Vec<Range<usize>>,
    pub freq: Vec<Range<usize>>,
}

impl MaskBands {
    pub fn contains(&self, frame: usize, bin: usize) -> bool {
        self.time.iter().any(|r| r.contains(&frame)) || self.freq.iter().any(|r| r.contains(&bin))
    }
}

fn random_band(extent: usize, max_width: usize, rng: &mut impl Rng) -> Range<usize> {
    let width = rng.random_range(0..=max_width);
    let start = rng.random_range(0..=extent - width);
    start..start + width
}

/// Draws SpecAugment bands for a grid of the given shape.
pub fn sample_bands(frames: usize, bins: usize, cfg: &SpecAugmentConfig, rng: &mut impl Rng) -> MaskBands {
    MaskBands {
        time: (0..cfg.num_time_masks)
            .map(|_| random_band(frames, cfg.max_time_width, rng))
            .collect(),
        freq: (0..cfg.num_freq_masks)
            .map(|_| random_band(bins, cfg.max_freq_width, rng))
            .collect(),
    }
}

/// Sets every cell inside the given bands to zero.
pub fn apply_bands(s: &Spectrogram, bands: &MaskBands) -> Spectrogram {
    let mut grid = s.grid.clone();
    for r in &bands.time {
        grid.slice_mut(s![r.clone(), ..]).fill(0.0);
    }
    for r in &bands.freq {
        grid.slice_mut(s![.., r.clone()]).fill(0.0);
    }
    Spectrogram {
        grid,
        frame_rate: s.frame_rate,
    }
}

/// SpecAugment: zero `num_time_masks` time bands and `num_freq_masks`
/// frequency bands, each of uniform random width in `[0, max]`. Bands may
/// overlap.
pub fn strong_augment(s: &Spectrogram, cfg: &SpecAugmentConfig, rng: &mut impl Rng) -> Result<Spectrogram> {
    Ok(strong_augment_with_bands(s, cfg, rng)?.0)
}

/// As [`strong_augment`], also returning the bands that were applied.
pub fn strong_augment_with_bands(
    s: &Spectrogram,
    cfg: &SpecAugmentConfig,
    rng: &mut impl Rng,
) -> Result<(Spectrogram, MaskBands)> {
    cfg.validate_for(s)?;
    let bands = sample_bands(s.frames(), s.bins(), cfg, rng);
    Ok((apply_bands(s, &bands), bands))
}

/// Weak and strong views of embedding rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingAugment {
    /// Contiguous feature bands zeroed per row in the strong view.
    pub num_masks: usize,
    /// Maximum band width as a fraction of the embedding dimension.
    pub max_width_frac: f64,
}

impl Default for EmbeddingAugment {
    fn default() -> Self {
        Self {
            num_masks: 2,
            max_width_frac: 0.1,
        }
    }
}

impl EmbeddingAugment {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_width_frac) {
            return Err(MudasError::config("strong mask width fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn weak_view(&self, x: &Array2<f64>) -> Array2<f64> {
        x.clone()
    }

    pub fn strong_view(&self, x: &Array2<f64>, rng: &mut impl Rng) -> Array2<f64> {
        let dim = x.ncols();
        let max_width = ((dim as f64) * self.max_width_frac).floor() as usize;
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for _ in 0..self.num_masks {
                let band = random_band(dim, max_width, rng);
                row.slice_mut(s![band]).fill(0.0);
            }
        }
        out
    }
}

/// SPG1: magic, u32 frames, u32 bins, f32 frame rate, row-major f32 grid.
pub fn save_spectrogram(s: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + s.grid.len() * 4);
    out.extend_from_slice(SPG1_MAGIC);
    put_u32(&mut out, s.frames() as u32);
    put_u32(&mut out, s.bins() as u32);
    out.extend_from_slice(&(s.frame_rate as f32).to_le_bytes());
    put_f32s(&mut out, s.grid.iter());
    write_file(path.as_ref(), &out)
}

pub fn read_spectrogram(bytes: &[u8]) -> Result<Spectrogram, FormatError> {
    let mut r = ByteReader::new("SPG1", bytes);
    r.magic(SPG1_MAGIC)?;
    let frames = r.u32()? as usize;
    let bins = r.u32()? as usize;
    let frame_rate = f64::from(r.f32()?);
    r.expect_payload(frames * bins * 4)?;
    let grid = Array2::from_shape_vec((frames, bins), r.f32_vec(frames * bins)?)
        .map_err(|e| FormatError::Other(e.to_string()))?;
    Spectrogram::new(grid, frame_rate).map_err(|e| FormatError::Other(e.to_string()))
}

pub fn load_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    read_spectrogram(&bytes).map_err(format_err(path))
}
