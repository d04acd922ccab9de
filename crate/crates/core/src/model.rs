//! MUD1 model files.
//!
//! Layout, all little-endian: magic `MUD1`, u32 version, then the config
//! (u32 input_dim, u32 hidden layer count, u32 per hidden width, u32
//! classes, f64 dropout, u64 init seed), then every tensor as f32 in
//! declaration order (per dense layer weight then bias, per BN layer gamma,
//! beta, running mean, running variance). A trailing u8 flags the optional
//! selection block: k source maxima, k source minima, k class weights.
//!
//! Optimizer moments are not persisted.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::io::{format_err, put_f32s, put_u32, read_file, write_file, ByteReader};
use crate::error::{FormatError, MudasError, Result};
use crate::nn::{BatchNorm, ClassifierConfig, Dense, ParameterSet};
use crate::select::{ClassWeights, SelectionStats, SourceRangeStats};

pub const MUD1_MAGIC: &[u8; 4] = b"MUD1";
pub const MUD1_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ParameterSet,
    pub selection: Option<SelectionStats>,
}

impl SavedModel {
    pub fn new(params: ParameterSet, selection: Option<SelectionStats>) -> Result<Self> {
        if let Some(s) = &selection {
            if s.ranges.num_classes() != params.num_classes() {
                return Err(MudasError::shape(
                    "selection stats classes",
                    params.num_classes(),
                    s.ranges.num_classes(),
                ));
            }
        }
        Ok(Self { params, selection })
    }
}

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| MudasError::config(format!("{n} does not fit the model format")))
}

pub fn write_model(model: &SavedModel) -> Result<Vec<u8>> {
    let p = &model.params;
    let cfg = p.config();
    let mut out = Vec::new();
    out.extend_from_slice(MUD1_MAGIC);
    put_u32(&mut out, MUD1_VERSION);
    put_u32(&mut out, u32_of(cfg.input_dim)?);
    put_u32(&mut out, u32_of(cfg.hidden_dims.len())?);
    for &w in &cfg.hidden_dims {
        put_u32(&mut out, u32_of(w)?);
    }
    put_u32(&mut out, u32_of(cfg.num_classes)?);
    out.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    for d in &p.dense {
        put_f32s(&mut out, d.weight.iter());
        put_f32s(&mut out, d.bias.iter());
    }
    for n in &p.norms {
        put_f32s(&mut out, n.gamma.iter());
        put_f32s(&mut out, n.beta.iter());
        put_f32s(&mut out, n.running_mean.iter());
        put_f32s(&mut out, n.running_var.iter());
    }
    match &model.selection {
        None => out.push(0),
        Some(s) => {
            out.push(1);
            put_f32s(&mut out, s.ranges.max_ws.iter());
            put_f32s(&mut out, s.ranges.min_ws.iter());
            put_f32s(&mut out, s.weights.as_array().iter());
        }
    }
    Ok(out)
}

fn usize_of(v: u32) -> usize {
    v as usize
}

fn invalid(e: MudasError) -> FormatError {
    FormatError::Other(e.to_string())
}

pub fn read_model(bytes: &[u8]) -> Result<SavedModel, FormatError> {
    let mut r = ByteReader::new("MUD1", bytes);
    r.magic(MUD1_MAGIC)?;
    let version = r.u32()?;
    if version != MUD1_VERSION {
        return Err(FormatError::UnsupportedVersion { format: "MUD1", version });
    }
    let input_dim = usize_of(r.u32()?);
    let layers = usize_of(r.u32()?);
    // Each hidden width takes four bytes; reject absurd counts before
    // allocating.
    r.expect_at_least(layers * 4)?;
    let hidden_dims = (0..layers).map(|_| r.u32().map(usize_of)).collect::<Result<Vec<_>, _>>()?;
    let num_classes = usize_of(r.u32()?);
    let dropout_rate = f64::from_bits(r.u64()?);
    let seed = r.u64()?;
    let config = ClassifierConfig {
        input_dim,
        hidden_dims,
        num_classes,
        dropout_rate,
        seed,
    };
    config.validate().map_err(invalid)?;

    let widths = config.widths();
    let mut tensors = 0usize;
    for w in widths.windows(2) {
        tensors = tensors.saturating_add(w[0].saturating_mul(w[1]).saturating_add(w[1]));
    }
    tensors = tensors.saturating_add(config.hidden_dims.iter().fold(0usize, |a, &w| a.saturating_add(w.saturating_mul(4))));
    r.expect_at_least(tensors.saturating_mul(4).saturating_add(1))?;

    let mut dense = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let weight = Array2::from_shape_vec((w[0], w[1]), r.f32_vec(w[0] * w[1])?).expect("sized");
        let bias = Array1::from(r.f32_vec(w[1])?);
        dense.push(Dense { weight, bias });
    }
    let mut norms = Vec::with_capacity(config.hidden_dims.len());
    for &w in &config.hidden_dims {
        norms.push(BatchNorm {
            gamma: Array1::from(r.f32_vec(w)?),
            beta: Array1::from(r.f32_vec(w)?),
            running_mean: Array1::from(r.f32_vec(w)?),
            running_var: Array1::from(r.f32_vec(w)?),
        });
    }
    let params = ParameterSet::from_parts(config, dense, Some(norms)).map_err(invalid)?;

    let selection = match r.u8()? {
        0 => None,
        1 => {
            let k = num_classes;
            r.expect_payload(3 * k * 4)?;
            let max = Array1::from(r.f32_vec(k)?);
            let min = Array1::from(r.f32_vec(k)?);
            let w = Array1::from(r.f32_vec(k)?);
            // f32 storage can leave the weights a few ulps off a unit sum.
            let w = &w / w.sum();
            let ranges = SourceRangeStats::new(max, min).map_err(invalid)?;
            let weights = ClassWeights::new(w).map_err(invalid)?;
            Some(SelectionStats::new(ranges, weights).map_err(invalid)?)
        }
        v => return Err(FormatError::BadTag { field: "selection flag", value: v }),
    };
    r.finish()?;
    Ok(SavedModel { params, selection })
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &write_model(model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    read_model(&read_file(path)?).map_err(format_err(path))
}
