//! The operations behind the `mudas` binary. Each writes its files into an
//! output directory and returns the text it prints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Axis;

use crate::adapt::{adapt, AdaptReport, Init};
use crate::baseline::{train_supervised, EpochLoss};
use crate::config::RunConfig;
use crate::data::{
    gen_synthetic, load_embeddings, load_labels, save_embeddings, save_labels, save_scores, Domain, EmbeddingBatch,
    LabeledSet, UnlabeledSet,
};
use crate::error::{MudasError, Result};
use crate::metrics::{save_pr_curves, MetricReport};
use crate::model::{save_model, SavedModel};
use crate::nn::ParameterSet;
use crate::select::{class_weights, Offer, SelectionBuffer, SelectionStats, SourceRangeStats};

pub const SOURCE_EMB: &str = "source.emb";
pub const SOURCE_LABELS: &str = "source_labels.csv";
pub const TARGET_EMB: &str = "target.emb";
pub const TARGET_LABELS: &str = "target_labels.csv";
pub const MODEL_FILE: &str = "model.mud";
pub const METRICS_FILE: &str = "metrics.txt";

/// Reads the config file (if any), then applies `key=value` overrides and
/// finally the seed.
pub fn resolve_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for pair in overrides {
        cfg.apply_override(pair)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| MudasError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| MudasError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn log_header(command: &str, cfg: &RunConfig) -> String {
    let mut out = format!("command={command}\n");
    for line in cfg.resolved().lines() {
        let _ = writeln!(out, "config.{line}");
    }
    out
}

pub fn load_labeled(embeddings: &Path, labels: &Path) -> Result<LabeledSet> {
    LabeledSet::new(load_embeddings(embeddings, None)?, load_labels(labels)?)
}

pub fn load_unlabeled(embeddings: &Path) -> Result<UnlabeledSet> {
    Ok(UnlabeledSet::new(load_embeddings(embeddings, None)?))
}

fn evaluate(params: &ParameterSet, set: &LabeledSet) -> Result<MetricReport> {
    let z = params.predict(set.embeddings.rows.view())?;
    MetricReport::compute(&set.labels, &z)
}

/// Writes `source.emb`, `source_labels.csv`, `target.emb` and
/// `target_labels.csv`. The target labels are for evaluation only.
pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<String> {
    let spec = cfg.synthetic_spec()?;
    ensure_dir(out)?;
    let (source, target) = gen_synthetic(&spec, cfg.seed)?;
    save_embeddings(&source.embeddings, out.join(SOURCE_EMB))?;
    save_labels(&source.labels, out.join(SOURCE_LABELS))?;
    save_embeddings(&target.embeddings, out.join(TARGET_EMB))?;
    save_labels(&target.labels, out.join(TARGET_LABELS))?;
    let mut log = log_header("gen", cfg);
    let _ = writeln!(log, "source_rows={}", source.len());
    let _ = writeln!(log, "target_rows={}", target.len());
    write_text(&out.join("gen.log"), &log)?;
    Ok(format!("source_rows={}\ntarget_rows={}\n", source.len(), target.len()))
}

/// Selection statistics of a trained model over its labeled training set.
pub fn selection_stats(params: &ParameterSet, set: &LabeledSet) -> Result<SelectionStats> {
    SelectionStats::new(
        SourceRangeStats::from_model(params, set.embeddings.rows.view())?,
        class_weights(&set.labels)?,
    )
}

fn epoch_lines(log: &[EpochLoss]) -> String {
    log.iter().map(|e| e.log_line() + "\n").collect()
}

fn metrics_text(train: Option<&MetricReport>, eval: Option<&MetricReport>) -> String {
    let mut out = String::new();
    if let Some(m) = train {
        out.push_str(&m.to_kv("train"));
    }
    if let Some(m) = eval {
        out.push_str(&m.to_kv("eval"));
    }
    out
}

/// Supervised BCE training on `train`; `command` names the log.
pub fn cmd_train_supervised(
    command: &str,
    cfg: &RunConfig,
    train: &LabeledSet,
    eval: Option<&LabeledSet>,
    out: &Path,
) -> Result<String> {
    ensure_dir(out)?;
    let net = cfg.classifier(train.dim(), train.num_classes())?;
    let (params, epochs) = train_supervised(train, &cfg.baseline_config()?, Init::Fresh(net))?;
    let stats = selection_stats(&params, train)?;
    save_model(&SavedModel::new(params.clone(), Some(stats))?, out.join(MODEL_FILE))?;

    let train_metrics = evaluate(&params, train)?;
    let eval_metrics = eval.map(|e| evaluate(&params, e)).transpose()?;
    let metrics = metrics_text(Some(&train_metrics), eval_metrics.as_ref());
    write_text(&out.join(METRICS_FILE), &metrics)?;

    let mut log = log_header(command, cfg);
    let _ = writeln!(log, "train_rows={}", train.len());
    log.push_str(&epoch_lines(&epochs));
    log.push_str(&metrics);
    write_text(&out.join("train.log"), &log)?;
    Ok(metrics)
}

/// Scores every target row with `stats` under `params` and keeps the best
/// `capacity` rows. Returns the kept row indices (best first) and scores.
pub fn select_rows(
    params: &ParameterSet,
    stats: &SelectionStats,
    target: &EmbeddingBatch,
    capacity: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let z = params.predict(target.rows.view())?;
    let mut buf = SelectionBuffer::new(capacity)?;
    for (i, row) in z.axis_iter(Axis(0)).enumerate() {
        buf.offer(i, stats.score(row)?);
    }
    Ok(buf.into_entries().into_iter().map(|e| (e.item, e.score)).unzip())
}

pub struct AdaptInputs<'a> {
    pub source: &'a LabeledSet,
    pub target: &'a UnlabeledSet,
    pub init: Option<SavedModel>,
    /// Held-out target labels; never shown to adaptation.
    pub eval: Option<&'a LabeledSet>,
    pub select_buffer: Option<usize>,
}

pub fn cmd_adapt(cfg: &RunConfig, inputs: AdaptInputs<'_>, out: &Path) -> Result<String> {
    ensure_dir(out)?;
    let source = inputs.source;
    let mut log = log_header("adapt", cfg);
    let (init, stats) = match inputs.init {
        Some(m) => {
            let stats = match m.selection {
                Some(s) => s,
                None => selection_stats(&m.params, source)?,
            };
            (Init::Pretrained(m.params), Some(stats))
        }
        None => (Init::Fresh(cfg.classifier(source.dim(), source.num_classes())?), None),
    };

    let target = match inputs.select_buffer {
        None => inputs.target.clone(),
        Some(n) => {
            let (Init::Pretrained(params), Some(stats)) = (&init, &stats) else {
                return Err(MudasError::config("--select-buffer needs --init with a trained model"));
            };
            if inputs.target.dim() != params.input_dim() {
                return Err(MudasError::shape("target embedding width", params.input_dim(), inputs.target.dim()));
            }
            let (rows, _) = select_rows(params, stats, &inputs.target.embeddings, n)?;
            let _ = writeln!(log, "select_buffer={n}");
            UnlabeledSet::new(inputs.target.embeddings.select(&rows))
        }
    };
    let _ = writeln!(log, "target_rows_used={}", target.len());

    let (params, report) = adapt(source, &target, &cfg.adapt_config()?, init)?;
    let model_stats = match stats {
        Some(s) => s,
        None => selection_stats(&params, source)?,
    };
    save_model(&SavedModel::new(params.clone(), Some(model_stats))?, out.join(MODEL_FILE))?;
    log.push_str(&report.log());

    let eval_metrics = inputs.eval.map(|e| evaluate(&params, e)).transpose()?;
    let metrics = metrics_text(None, eval_metrics.as_ref());
    write_text(&out.join(METRICS_FILE), &metrics)?;
    log.push_str(&metrics);
    write_text(&out.join("adapt.log"), &log)?;
    Ok(format!("target_rows_used={}\n{metrics}", target.len()))
}

pub fn cmd_eval(model: &SavedModel, set: &LabeledSet, pr_curve: Option<&Path>, out: Option<&Path>) -> Result<String> {
    let z = model.params.predict(set.embeddings.rows.view())?;
    let report = MetricReport::compute(&set.labels, &z)?;
    let text = report.to_kv("");
    if let Some(path) = pr_curve {
        save_pr_curves(&set.labels, z.view(), path)?;
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join(METRICS_FILE), &text)?;
    }
    Ok(text)
}

pub struct StreamInputs<'a> {
    pub model: SavedModel,
    pub source: &'a LabeledSet,
    pub stream: &'a EmbeddingBatch,
    pub eval: Option<&'a LabeledSet>,
    pub capacity: usize,
    pub trigger_every: usize,
}

/// Outcome of [`cmd_stream_sim`] beyond the files it writes.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSummary {
    /// Stream row indices in the buffer, best first.
    pub buffer_rows: Vec<usize>,
    pub buffer_scores: Vec<f64>,
    pub retrains: usize,
    pub evictions: u64,
    pub report: String,
}

/// Replays `stream` one row at a time: inference, D-score, buffer offer.
/// Every `trigger_every` accepted rows the model is adapted on the source
/// set plus the current buffer contents.
pub fn cmd_stream_sim(cfg: &RunConfig, inputs: StreamInputs<'_>, out: &Path) -> Result<StreamSummary> {
    if inputs.trigger_every == 0 {
        return Err(MudasError::config("--trigger-every must be >= 1"));
    }
    if inputs.stream.is_empty() {
        return Err(MudasError::EmptyInput("stream has no rows"));
    }
    ensure_dir(out)?;
    let adapt_cfg = cfg.adapt_config()?;
    let source = inputs.source;
    let mut params = inputs.model.params;
    let stats = match inputs.model.selection {
        Some(s) => s,
        None => selection_stats(&params, source)?,
    };
    if inputs.stream.dim() != params.input_dim() {
        return Err(MudasError::shape("stream embedding width", params.input_dim(), inputs.stream.dim()));
    }

    let mut report = log_header("stream-sim", cfg);
    let _ = writeln!(
        report,
        "capacity={} trigger_every={} stream_rows={}",
        inputs.capacity,
        inputs.trigger_every,
        inputs.stream.len()
    );
    let mut buf = SelectionBuffer::new(inputs.capacity)?;
    let mut accepted_since = 0usize;
    let mut retrains = 0usize;
    for i in 0..inputs.stream.len() {
        let x = inputs.stream.rows.slice(ndarray::s![i..i + 1, ..]);
        let z = params.predict(x)?;
        let d = stats.score(z.row(0))?;
        if !matches!(buf.offer(i, d), Offer::Rejected) {
            accepted_since += 1;
        }
        if accepted_since == inputs.trigger_every {
            accepted_since = 0;
            retrains += 1;
            let rows: Vec<usize> = buf.entries().iter().map(|e| e.item).collect();
            let target = UnlabeledSet::new(inputs.stream.select(&rows));
            let (next, adapt_report) = adapt(source, &target, &adapt_cfg, Init::Pretrained(params))?;
            params = next;
            let _ = write!(
                report,
                "trigger={retrains} arrival={i} occupancy={} evictions={} adapt_steps={}",
                buf.len(),
                buf.evictions(),
                adapt_report.steps.len()
            );
            if let Some(e) = inputs.eval {
                let m = evaluate(&params, e)?;
                let _ = write!(report, " micro_auprc={} macro_auprc={} f1_at_0.5={}", m.micro_auprc, m.macro_auprc, m.f1_at_half);
            }
            report.push('\n');
            log_final_epoch(&mut report, &adapt_report);
        }
    }
    let evictions = buf.evictions();
    let occupancy = buf.len();
    let (buffer_rows, buffer_scores): (Vec<usize>, Vec<f64>) =
        buf.into_entries().into_iter().map(|e| (e.item, e.score)).unzip();
    let _ = writeln!(report, "final occupancy={occupancy} evictions={evictions} retrains={retrains}");
    if let Some(e) = inputs.eval {
        report.push_str(&evaluate(&params, e)?.to_kv("final"));
    }

    let kept = EmbeddingBatch::new(
        inputs.stream.select(&buffer_rows).rows,
        Domain::Target,
        inputs.stream.aug,
    );
    save_embeddings(&kept, out.join("buffer.emb"))?;
    save_scores(&buffer_scores, out.join("buffer.dsc"))?;
    save_model(&SavedModel::new(params, Some(stats))?, out.join(MODEL_FILE))?;
    write_text(&out.join("report.txt"), &report)?;
    Ok(StreamSummary {
        buffer_rows,
        buffer_scores,
        retrains,
        evictions,
        report,
    })
}

fn log_final_epoch(report: &mut String, adapt_report: &AdaptReport) {
    if let Some(e) = adapt_report.epochs.last() {
        let _ = writeln!(report, "  {}", e.log_line());
    }
}

/// Default file locations under a `gen` output directory.
pub fn data_paths(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join(SOURCE_EMB),
        dir.join(SOURCE_LABELS),
        dir.join(TARGET_EMB),
        dir.join(TARGET_LABELS),
    ]
}

