//! Precision-recall metrics for multi-label predictions.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};

use crate::data::LabelMatrix;
use crate::error::{MudasError, Result};
use crate::ProbMatrix;

/// One operating point: everything scoring `>= threshold` is predicted
/// positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Points ordered by decreasing threshold, so recall never decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Tied scores form a single operating point.
    pub fn new<'a>(y: impl IntoIterator<Item = &'a u8>, scores: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let mut pairs: Vec<(f64, bool)> = scores.into_iter().copied().zip(y.into_iter().map(|&v| v == 1)).collect();
        if pairs.iter().any(|(s, _)| s.is_nan()) {
            return Err(MudasError::NonFinite {
                name: "scores".into(),
                detail: "NaN score".into(),
            });
        }
        let positives = pairs.iter().filter(|(_, p)| *p).count();
        if positives == 0 {
            return Err(MudasError::NoPositives("label vector has no positives"));
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut points = Vec::new();
        let (mut tp, mut seen) = (0usize, 0usize);
        let mut i = 0;
        while i < pairs.len() {
            let threshold = pairs[i].0;
            while i < pairs.len() && pairs[i].0 == threshold {
                tp += usize::from(pairs[i].1);
                seen += 1;
                i += 1;
            }
            points.push(PrPoint {
                threshold,
                precision: tp as f64 / seen as f64,
                recall: tp as f64 / positives as f64,
            });
        }
        Ok(Self { points })
    }

    /// Step-wise area: `sum (R_n - R_{n-1}) * P_n`.
    pub fn average_precision(&self) -> f64 {
        let mut prev = 0.0;
        let mut ap = 0.0;
        for p in &self.points {
            ap += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        ap
    }
}

fn check_len(y: usize, z: usize) -> Result<()> {
    if y != z {
        return Err(MudasError::shape("labels vs scores", y, z));
    }
    Ok(())
}

/// Errors with [`MudasError::NoPositives`] when `y` has no positive.
pub fn average_precision(y: ArrayView1<'_, u8>, scores: ArrayView1<'_, f64>) -> Result<f64> {
    check_len(y.len(), scores.len())?;
    Ok(PrCurve::new(y.iter(), scores.iter())?.average_precision())
}

fn check_shapes(y: &LabelMatrix, z: ArrayView2<'_, f64>) -> Result<()> {
    if y.cells().dim() != z.dim() {
        return Err(MudasError::shape(
            "labels vs probabilities",
            format!("{:?}", y.cells().dim()),
            format!("{:?}", z.dim()),
        ));
    }
    Ok(())
}

/// AP over every (row, class) cell pooled into one problem.
pub fn micro_auprc(y: &LabelMatrix, z: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(y, z)?;
    Ok(PrCurve::new(y.cells().iter(), z.iter())?.average_precision())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroAuprc {
    pub value: f64,
    /// `None` for classes without positives.
    pub per_class: Vec<Option<f64>>,
}

impl MacroAuprc {
    pub fn evaluated(&self) -> usize {
        self.per_class.iter().flatten().count()
    }

    pub fn skipped(&self) -> usize {
        self.per_class.len() - self.evaluated()
    }
}

/// Mean per-class AP over classes that have at least one positive.
pub fn macro_auprc(y: &LabelMatrix, z: ArrayView2<'_, f64>) -> Result<MacroAuprc> {
    check_shapes(y, z)?;
    let cells = y.cells();
    let mut per_class = Vec::with_capacity(y.num_classes());
    for c in 0..y.num_classes() {
        per_class.push(match average_precision(cells.column(c), z.column(c)) {
            Ok(ap) => Some(ap),
            Err(MudasError::NoPositives(_)) => None,
            Err(e) => return Err(e),
        });
    }
    let aps: Vec<f64> = per_class.iter().flatten().copied().collect();
    if aps.is_empty() {
        return Err(MudasError::NoPositives("no class has a positive label"));
    }
    Ok(MacroAuprc {
        value: aps.iter().sum::<f64>() / aps.len() as f64,
        per_class,
    })
}

/// Micro-pooled F1 after predicting positive wherever `z >= threshold`.
pub fn f1_at(y: &LabelMatrix, z: ArrayView2<'_, f64>, threshold: f64) -> Result<f64> {
    check_shapes(y, z)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&label, &score) in y.cells().iter().zip(z.iter()) {
        match (label == 1, score >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * p * r / (p + r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub micro_auprc: f64,
    pub macro_auprc: f64,
    pub f1_at_half: f64,
    pub per_class: Vec<Option<f64>>,
    pub evaluated_classes: usize,
    pub skipped_classes: usize,
}

impl MetricReport {
    pub fn compute(y: &LabelMatrix, z: &ProbMatrix) -> Result<Self> {
        let macro_ = macro_auprc(y, z.view())?;
        Ok(Self {
            micro_auprc: micro_auprc(y, z.view())?,
            f1_at_half: f1_at(y, z.view(), 0.5)?,
            evaluated_classes: macro_.evaluated(),
            skipped_classes: macro_.skipped(),
            macro_auprc: macro_.value,
            per_class: macro_.per_class,
        })
    }

    /// `key=value` lines, prefixed with `prefix` when non-empty.
    pub fn to_kv(&self, prefix: &str) -> String {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}_{k}") };
        let mut out = String::new();
        let _ = writeln!(out, "{}={}", key("micro_auprc"), self.micro_auprc);
        let _ = writeln!(out, "{}={}", key("macro_auprc"), self.macro_auprc);
        let _ = writeln!(out, "{}={}", key("f1_at_0.5"), self.f1_at_half);
        let _ = writeln!(out, "{}={}", key("evaluated_classes"), self.evaluated_classes);
        let _ = writeln!(out, "{}={}", key("skipped_classes"), self.skipped_classes);
        out
    }
}

/// Per-class PR points as `class,threshold,precision,recall` rows.
/// Classes without positives are left out.
pub fn write_pr_curves<W: std::io::Write>(y: &LabelMatrix, z: ArrayView2<'_, f64>, writer: W) -> Result<()> {
    check_shapes(y, z)?;
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| MudasError::Io {
        path: "<pr curve>".into(),
        source: e.into(),
    };
    w.write_record(["class", "threshold", "precision", "recall"]).map_err(io_err)?;
    let cells = y.cells();
    for (c, name) in y.class_names().iter().enumerate() {
        let curve = match PrCurve::new(cells.column(c).iter(), z.column(c).iter()) {
            Ok(curve) => curve,
            Err(MudasError::NoPositives(_)) => continue,
            Err(e) => return Err(e),
        };
        for p in curve.points {
            w.write_record([
                name.clone(),
                p.threshold.to_string(),
                p.precision.to_string(),
                p.recall.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| MudasError::Io {
        path: "<pr curve>".into(),
        source: e,
    })
}

pub fn save_pr_curves(y: &LabelMatrix, z: ArrayView2<'_, f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_pr_curves(y, z, &mut buf)?;
    crate::data::io::write_file(path.as_ref(), &buf)
}
