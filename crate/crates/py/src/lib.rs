//! Python bindings. Matrices cross the boundary as lists of rows.

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use mudas_core::adapt::{self as core_adapt, AdaptConfig, AlignmentStats, Diversity, Init};
use mudas_core::baseline::train_supervised;
use mudas_core::data::{gen_synthetic as core_gen, LabelMatrix, LabeledSet, SyntheticSpec, UnlabeledSet};
use mudas_core::metrics::{self, MetricReport};
use mudas_core::model::{load_model, save_model, SavedModel};
use mudas_core::nn::{ClassifierConfig, ParameterSet};
use mudas_core::select::{self, class_weights, Offer, SelectionStats, SourceRangeStats, DEFAULT_RANGE_EPS};
use mudas_core::MudasError;

fn err(e: MudasError) -> PyErr {
    let msg = e.to_string();
    match e {
        MudasError::Io { .. } => PyOSError::new_err(msg),
        MudasError::NonFinite { .. } => PyArithmeticError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn label_matrix(rows: Vec<Vec<u8>>) -> PyResult<LabelMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("label rows must all have the same length"));
    }
    let n = rows.len();
    let cells = Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    LabelMatrix::from_cells(cells).map_err(err)
}

fn rows<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Embeddings with multi-hot labels.
#[pyclass(name = "LabeledSet", module = "mudas", skip_from_py_object)]
#[derive(Clone)]
struct PyLabeledSet {
    inner: LabeledSet,
}

#[pymethods]
impl PyLabeledSet {
    #[new]
    fn new(embeddings: Vec<Vec<f64>>, labels: Vec<Vec<u8>>) -> PyResult<Self> {
        let batch = mudas_core::data::EmbeddingBatch::new(
            matrix(embeddings)?,
            mudas_core::data::Domain::Source,
            mudas_core::data::AugTag::None,
        );
        let inner = LabeledSet::new(batch, label_matrix(labels)?).map_err(err)?;
        Ok(Self { inner })
    }

    fn embeddings(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.embeddings.rows)
    }

    fn labels(&self) -> Vec<Vec<u8>> {
        rows(&self.inner.labels.cells().to_owned())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Synthetic source and target domains; the target keeps its labels for
/// evaluation.
#[pyfunction]
#[pyo3(signature = (seed, classes=6, dim=256, prior=0.3, shift_angle=1.0, shift_translation=0.5, noise_sigma=0.2, source_samples=500, target_samples=500))]
#[allow(clippy::too_many_arguments)]
fn gen_synthetic(
    seed: u64,
    classes: usize,
    dim: usize,
    prior: f64,
    shift_angle: f64,
    shift_translation: f64,
    noise_sigma: f64,
    source_samples: usize,
    target_samples: usize,
) -> PyResult<(PyLabeledSet, PyLabeledSet)> {
    let spec = SyntheticSpec {
        dim,
        shift_angle,
        shift_translation,
        noise_sigma,
        source_samples,
        target_samples,
        ..SyntheticSpec::default()
    }
    .with_classes(classes, prior);
    let (source, target) = core_gen(&spec, seed).map_err(err)?;
    Ok((PyLabeledSet { inner: source }, PyLabeledSet { inner: target }))
}

/// MLP classifier with a sigmoid head, plus the selection statistics it
/// was saved with.
#[pyclass(name = "Classifier", module = "mudas", skip_from_py_object)]
#[derive(Clone)]
struct PyClassifier {
    params: ParameterSet,
    selection: Option<SelectionStats>,
}

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (input_dim, num_classes, hidden_dims=vec![128, 128], dropout=0.2, seed=0))]
    fn new(input_dim: usize, num_classes: usize, hidden_dims: Vec<usize>, dropout: f64, seed: u64) -> PyResult<Self> {
        let cfg = ClassifierConfig::new(input_dim, num_classes)
            .with_hidden(hidden_dims)
            .with_dropout(dropout)
            .with_seed(seed);
        Ok(Self {
            params: ParameterSet::init(&cfg).map_err(err)?,
            selection: None,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let m = load_model(path).map_err(err)?;
        Ok(Self {
            params: m.params,
            selection: m.selection,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let m = SavedModel::new(self.params.clone(), self.selection.clone()).map_err(err)?;
        save_model(&m, path).map_err(err)
    }

    /// Inference-mode probabilities.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let z = self.params.predict(matrix(x)?.view()).map_err(err)?;
        Ok(rows(&z))
    }

    /// Records source range statistics and class weights for D-scores.
    fn fit_selection(&mut self, source: &PyLabeledSet) -> PyResult<()> {
        let ranges = SourceRangeStats::from_model(&self.params, source.inner.embeddings.rows.view()).map_err(err)?;
        let weights = class_weights(&source.inner.labels).map_err(err)?;
        self.selection = Some(SelectionStats::new(ranges, weights).map_err(err)?);
        Ok(())
    }

    /// D-score of each row under the stored selection statistics.
    fn d_scores(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let stats = self
            .selection
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("no selection statistics; call fit_selection first"))?;
        let z = self.params.predict(matrix(x)?.view()).map_err(err)?;
        select::d_scores(z.view(), &stats.ranges, &stats.weights, DEFAULT_RANGE_EPS).map_err(err)
    }

    /// micro/macro AUPRC and F1@0.5 on a labeled set.
    fn evaluate(&self, set: &PyLabeledSet) -> PyResult<Vec<(String, f64)>> {
        let z = self.params.predict(set.inner.embeddings.rows.view()).map_err(err)?;
        let r = MetricReport::compute(&set.inner.labels, &z).map_err(err)?;
        Ok(vec![
            ("micro_auprc".into(), r.micro_auprc),
            ("macro_auprc".into(), r.macro_auprc),
            ("f1_at_0.5".into(), r.f1_at_half),
        ])
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.params.num_classes()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.params == other.params && self.selection == other.selection
    }
}

fn adapt_config(epochs: usize, seed: u64, batch_size: usize, diversity: &str) -> PyResult<AdaptConfig> {
    let diversity = match diversity {
        "as_printed" => Diversity::AsPrinted,
        "negated" => Diversity::Negated,
        "off" => Diversity::Off,
        other => return Err(PyValueError::new_err(format!("unknown diversity mode {other:?}"))),
    };
    Ok(AdaptConfig {
        epochs,
        seed,
        batch_source: batch_size,
        batch_target: batch_size,
        diversity,
        ..AdaptConfig::default()
    })
}

fn finish(params: ParameterSet, selection_source: &LabeledSet) -> PyResult<PyClassifier> {
    let mut c = PyClassifier {
        params,
        selection: None,
    };
    c.fit_selection(&PyLabeledSet {
        inner: selection_source.clone(),
    })?;
    Ok(c)
}

/// Supervised BCE training on a labeled set. Returns the model and one log
/// line per epoch.
#[pyfunction]
#[pyo3(signature = (train, init, epochs=50, seed=0, batch_size=64))]
fn train_source(
    train: &PyLabeledSet,
    init: &PyClassifier,
    epochs: usize,
    seed: u64,
    batch_size: usize,
) -> PyResult<(PyClassifier, Vec<String>)> {
    let cfg = adapt_config(epochs, seed, batch_size, "as_printed")?;
    let (params, log) = train_supervised(&train.inner, &cfg, Init::Pretrained(init.params.clone())).map_err(err)?;
    let model = finish(params, &train.inner)?;
    Ok((model, log.iter().map(|e| e.log_line()).collect()))
}

/// Adapts `init` to the unlabeled rows of `target`; target labels are
/// ignored.
#[pyfunction]
#[pyo3(signature = (source, target, init, epochs=50, seed=0, batch_size=64, diversity="as_printed"))]
fn adapt(
    source: &PyLabeledSet,
    target: Vec<Vec<f64>>,
    init: &PyClassifier,
    epochs: usize,
    seed: u64,
    batch_size: usize,
    diversity: &str,
) -> PyResult<(PyClassifier, Vec<String>)> {
    let cfg = adapt_config(epochs, seed, batch_size, diversity)?;
    let target = UnlabeledSet::new(mudas_core::data::EmbeddingBatch::new(
        matrix(target)?,
        mudas_core::data::Domain::Target,
        mudas_core::data::AugTag::None,
    ));
    let (params, report) =
        core_adapt::adapt(&source.inner, &target, &cfg, Init::Pretrained(init.params.clone())).map_err(err)?;
    let mut model = finish(params, &source.inner)?;
    if init.selection.is_some() {
        model.selection = init.selection.clone();
    }
    Ok((model, report.epochs.iter().map(|e| e.log_line()).collect()))
}

/// Per-class `(c_plus, c_minus)` from weak source probabilities.
#[pyfunction]
fn compute_thresholds(z_ws: Vec<Vec<f64>>, tau_pos: f64, tau_neg: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let th = core_adapt::compute_thresholds(&matrix(z_ws)?, tau_pos, tau_neg).map_err(err)?;
    Ok((th.c_plus.to_vec(), th.c_minus.to_vec()))
}

/// Rescales target probabilities by the per-class source/target mean
/// ratio, capped at 1.
#[pyfunction]
#[pyo3(signature = (z_wt, mean_ws, mean_wt, eps=1e-8))]
fn align_distribution(z_wt: Vec<Vec<f64>>, mean_ws: Vec<f64>, mean_wt: Vec<f64>, eps: f64) -> PyResult<Vec<Vec<f64>>> {
    let z = matrix(z_wt)?;
    if mean_ws.len() != z.ncols() || mean_wt.len() != z.ncols() {
        return Err(PyValueError::new_err("class means must have one entry per column"));
    }
    let stats = AlignmentStats {
        mean_ws: Array1::from(mean_ws),
        mean_wt: Array1::from(mean_wt),
    };
    Ok(rows(&core_adapt::align_distribution(&z, &stats, eps)))
}

#[pyfunction]
fn average_precision(y: Vec<u8>, scores: Vec<f64>) -> PyResult<f64> {
    metrics::average_precision(Array1::from(y).view(), Array1::from(scores).view()).map_err(err)
}

#[pyfunction]
fn micro_auprc(y: Vec<Vec<u8>>, z: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::micro_auprc(&label_matrix(y)?, matrix(z)?.view()).map_err(err)
}

/// Mean per-class AP and the per-class values (`None` for classes with no
/// positives).
#[pyfunction]
fn macro_auprc(y: Vec<Vec<u8>>, z: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Option<f64>>)> {
    let m = metrics::macro_auprc(&label_matrix(y)?, matrix(z)?.view()).map_err(err)?;
    Ok((m.value, m.per_class))
}

#[pyfunction]
#[pyo3(signature = (z, max_ws, min_ws, weights, eps=DEFAULT_RANGE_EPS))]
fn d_score(z: Vec<f64>, max_ws: Vec<f64>, min_ws: Vec<f64>, weights: Vec<f64>, eps: f64) -> PyResult<f64> {
    let ranges = SourceRangeStats::new(Array1::from(max_ws), Array1::from(min_ws)).map_err(err)?;
    let w = select::ClassWeights::new(Array1::from(weights)).map_err(err)?;
    select::d_score(Array1::from(z).view(), &ranges, &w, eps).map_err(err)
}

/// Keeps the best `capacity` items by score; ties favour earlier arrivals.
#[pyclass(name = "SelectionBuffer", module = "mudas")]
struct PySelectionBuffer {
    inner: select::SelectionBuffer<Py<PyAny>>,
}

#[pymethods]
impl PySelectionBuffer {
    #[new]
    fn new(capacity: usize) -> PyResult<Self> {
        Ok(Self {
            inner: select::SelectionBuffer::new(capacity).map_err(err)?,
        })
    }

    /// Returns `"accepted"`, `"rejected"`, or `("evicted", item, score)`.
    fn offer(&mut self, py: Python<'_>, item: Py<PyAny>, score: f64) -> PyResult<Py<PyAny>> {
        if !score.is_finite() {
            return Err(PyValueError::new_err("score must be finite"));
        }
        Ok(match self.inner.offer(item, score) {
            Offer::Accepted => "accepted".into_pyobject(py)?.into_any().unbind(),
            Offer::Rejected => "rejected".into_pyobject(py)?.into_any().unbind(),
            Offer::AcceptedWithEviction(e) => ("evicted", e.item, e.score).into_pyobject(py)?.into_any().unbind(),
        })
    }

    /// `(item, score, arrival)` tuples, best first.
    fn entries(&self, py: Python<'_>) -> Vec<(Py<PyAny>, f64, u64)> {
        self.inner
            .entries()
            .into_iter()
            .map(|e| (e.item.clone_ref(py), e.score, e.arrival))
            .collect()
    }

    fn min_score(&self) -> Option<f64> {
        self.inner.min_score()
    }

    #[getter]
    fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    #[getter]
    fn evictions(&self) -> u64 {
        self.inner.evictions()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pymodule]
fn mudas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLabeledSet>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PySelectionBuffer>()?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train_source, m)?)?;
    m.add_function(wrap_pyfunction!(adapt, m)?)?;
    m.add_function(wrap_pyfunction!(compute_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(align_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(micro_auprc, m)?)?;
    m.add_function(wrap_pyfunction!(macro_auprc, m)?)?;
    m.add_function(wrap_pyfunction!(d_score, m)?)?;
    Ok(())
}
