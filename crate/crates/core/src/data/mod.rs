//! Dataset containers, file formats and the synthetic domain-shift generator.

pub(crate) mod io;
mod synthetic;

pub use io::{
    load_embeddings, load_labels, load_scores, read_embeddings, read_labels, save_embeddings,
    save_labels, save_scores, write_embeddings, write_labels, EMB1_MAGIC, EMB1_VERSION,
    DSC1_MAGIC,
};
pub use synthetic::{gen_synthetic, SyntheticDomains, SyntheticSpec};

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{MudasError, Result};

/// Which side of the domain split a set of embeddings comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Domain::Source),
            1 => Some(Domain::Target),
            _ => None,
        }
    }
}

/// Augmentation applied before the embedding was extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugTag {
    None,
    Weak,
    Strong,
}

impl AugTag {
    pub fn tag(self) -> u8 {
        match self {
            AugTag::None => 0,
            AugTag::Weak => 1,
            AugTag::Strong => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(AugTag::None),
            1 => Some(AugTag::Weak),
            2 => Some(AugTag::Strong),
            _ => None,
        }
    }
}

/// Rows of fixed-width feature vectors sharing a domain and augmentation tag.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub rows: Array2<f64>,
    pub domain: Domain,
    pub aug: AugTag,
}

impl EmbeddingBatch {
    pub fn new(rows: Array2<f64>, domain: Domain, aug: AugTag) -> Self {
        Self { rows, domain, aug }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Gathers the given rows into a new batch with the same tags.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: self.rows.select(Axis(0), indices),
            domain: self.domain,
            aug: self.aug,
        }
    }
}

/// Binary multi-label targets, one row per sample and one column per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    class_names: Vec<String>,
    cells: Array2<u8>,
}

impl LabelMatrix {
    /// Builds a label matrix, rejecting any cell that is not 0 or 1.
    pub fn new(class_names: Vec<String>, cells: Array2<u8>) -> Result<Self> {
        if class_names.len() != cells.ncols() {
            return Err(MudasError::shape(
                "label matrix",
                format!("{} class names", cells.ncols()),
                class_names.len(),
            ));
        }
        if let Some(((r, c), v)) = cells.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(MudasError::config(format!(
                "label cell ({r}, {c}) is {v}, expected 0 or 1"
            )));
        }
        Ok(Self { class_names, cells })
    }

    /// Label matrix with generated class names `c0..c{k-1}`.
    pub fn from_cells(cells: Array2<u8>) -> Result<Self> {
        let names = (0..cells.ncols()).map(|i| format!("c{i}")).collect();
        Self::new(names, cells)
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn cells(&self) -> ArrayView2<'_, u8> {
        self.cells.view()
    }

    pub fn rows(&self) -> usize {
        self.cells.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.cells.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.cells.mapv(f64::from)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            class_names: self.class_names.clone(),
            cells: self.cells.select(Axis(0), indices),
        }
    }

    pub fn positives(&self) -> usize {
        self.cells.iter().map(|&v| v as usize).sum()
    }
}

/// Embeddings with labels; `x^s, y^s` on the source side.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub embeddings: EmbeddingBatch,
    pub labels: LabelMatrix,
}

impl LabeledSet {
    pub fn new(embeddings: EmbeddingBatch, labels: LabelMatrix) -> Result<Self> {
        if embeddings.len() != labels.rows() {
            return Err(MudasError::shape(
                "labeled set rows",
                embeddings.len(),
                labels.rows(),
            ));
        }
        Ok(Self { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    /// Drops the labels. Used to hand a target set to adaptation.
    pub fn unlabeled(&self) -> UnlabeledSet {
        UnlabeledSet {
            embeddings: self.embeddings.clone(),
        }
    }
}

/// Embeddings without labels; `x^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    pub embeddings: EmbeddingBatch,
}

impl UnlabeledSet {
    pub fn new(embeddings: EmbeddingBatch) -> Self {
        Self { embeddings }
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }
}
