//! Confidence scoring of target embeddings and the bounded buffer that keeps
//! the highest-scoring ones for later relearning.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::data::LabelMatrix;
use crate::error::{MudasError, Result};
use crate::nn::ParameterSet;

pub const DEFAULT_RANGE_EPS: f64 = 1e-8;

/// Per-class extremes of source-model probabilities over the source set.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRangeStats {
    pub max_ws: Array1<f64>,
    pub min_ws: Array1<f64>,
}

impl SourceRangeStats {
    pub fn new(max_ws: Array1<f64>, min_ws: Array1<f64>) -> Result<Self> {
        if max_ws.len() != min_ws.len() {
            return Err(MudasError::shape("range stats", max_ws.len(), min_ws.len()));
        }
        let ok = max_ws
            .iter()
            .zip(&min_ws)
            .all(|(&hi, &lo)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && hi >= lo);
        if !ok {
            return Err(MudasError::config("range stats need 0 <= min <= max <= 1 per class"));
        }
        Ok(Self { max_ws, min_ws })
    }

    /// Column-wise max and min of a probability matrix.
    pub fn from_probs(z: ArrayView2<'_, f64>) -> Result<Self> {
        if z.nrows() == 0 {
            return Err(MudasError::EmptyInput("no rows to compute range stats from"));
        }
        let max = z.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
        let min = z.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
        Self::new(max, min)
    }

    /// Runs `params` in inference mode over `x` and records the ranges.
    pub fn from_model(params: &ParameterSet, x: ArrayView2<'_, f64>) -> Result<Self> {
        Self::from_probs(params.predict(x)?.view())
    }

    pub fn num_classes(&self) -> usize {
        self.max_ws.len()
    }
}

/// Class importance proportional to label frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    w: Array1<f64>,
}

impl ClassWeights {
    pub fn new(w: Array1<f64>) -> Result<Self> {
        let sum = w.sum();
        if w.is_empty() || w.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MudasError::config("class weights must be non-negative and sum to 1"));
        }
        Ok(Self { w })
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `w_i = positives in class i / all positives`.
pub fn class_weights(y: &LabelMatrix) -> Result<ClassWeights> {
    let counts = y.cells().mapv(f64::from).sum_axis(Axis(0));
    let total = counts.sum();
    if total == 0.0 {
        return Err(MudasError::config("class weights need at least one positive label"));
    }
    Ok(ClassWeights { w: counts / total })
}

/// Mean over classes of `w_i * z_i / range_i`, with the range floored at
/// `eps` for classes the source model never separated.
pub fn d_score(z: ArrayView1<'_, f64>, ranges: &SourceRangeStats, w: &ClassWeights, eps: f64) -> Result<f64> {
    let k = z.len();
    if ranges.num_classes() != k || w.len() != k {
        return Err(MudasError::shape(
            "d-score classes",
            k,
            format!("ranges {}, weights {}", ranges.num_classes(), w.len()),
        ));
    }
    let sum: f64 = (0..k)
        .map(|i| {
            let range = (ranges.max_ws[i] - ranges.min_ws[i]).max(eps);
            w.w[i] * (z[i] / range)
        })
        .sum();
    Ok(sum / k as f64)
}

/// Scores every row of `z`.
pub fn d_scores(z: ArrayView2<'_, f64>, ranges: &SourceRangeStats, w: &ClassWeights, eps: f64) -> Result<Vec<f64>> {
    z.rows().into_iter().map(|row| d_score(row, ranges, w, eps)).collect()
}

/// Everything the scorer needs, bundled for persistence with a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStats {
    pub ranges: SourceRangeStats,
    pub weights: ClassWeights,
}

impl SelectionStats {
    pub fn new(ranges: SourceRangeStats, weights: ClassWeights) -> Result<Self> {
        if ranges.num_classes() != weights.len() {
            return Err(MudasError::shape("selection stats", ranges.num_classes(), weights.len()));
        }
        Ok(Self { ranges, weights })
    }

    pub fn score(&self, z: ArrayView1<'_, f64>) -> Result<f64> {
        d_score(z, &self.ranges, &self.weights, DEFAULT_RANGE_EPS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry<T> {
    pub item: T,
    pub score: f64,
    pub arrival: u64,
}

// Heap order puts the weakest entry on top: lowest score, latest arrival
// among equal scores.
impl<T> BufferEntry<T> {
    fn weakness(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.arrival.cmp(&other.arrival))
    }
}

struct Weakest<T>(BufferEntry<T>);

impl<T> PartialEq for Weakest<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Weakest<T> {}

impl<T> PartialOrd for Weakest<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Weakest<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.weakness(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Offer<T> {
    Accepted,
    AcceptedWithEviction(BufferEntry<T>),
    Rejected,
}

/// Keeps the `capacity` best items seen so far, ranked by score and then
/// by earlier arrival.
pub struct SelectionBuffer<T> {
    capacity: usize,
    heap: BinaryHeap<Weakest<T>>,
    arrivals: u64,
    evictions: u64,
}

impl<T> SelectionBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(MudasError::config("selection buffer capacity must be >= 1"));
        }
        Ok(Self {
            capacity,
            heap: BinaryHeap::with_capacity(capacity),
            arrivals: 0,
            evictions: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() == self.capacity
    }

    /// Number of offers so far; also the arrival index of the next one.
    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    /// Current eviction candidate.
    pub fn min_score(&self) -> Option<f64> {
        self.heap.peek().map(|w| w.0.score)
    }

    pub fn offer(&mut self, item: T, score: f64) -> Offer<T> {
        let entry = BufferEntry {
            item,
            score,
            arrival: self.arrivals,
        };
        self.arrivals += 1;
        if self.heap.len() < self.capacity {
            self.heap.push(Weakest(entry));
            return Offer::Accepted;
        }
        let mut worst = self.heap.peek_mut().expect("capacity >= 1");
        // Ties keep the earlier arrival, so the newcomer needs a strictly
        // higher score.
        if score > worst.0.score {
            let evicted = std::mem::replace(&mut worst.0, entry);
            drop(worst);
            self.evictions += 1;
            Offer::AcceptedWithEviction(evicted)
        } else {
            Offer::Rejected
        }
    }

    /// Entries from best to worst.
    pub fn entries(&self) -> Vec<&BufferEntry<T>> {
        let mut out: Vec<_> = self.heap.iter().map(|w| &w.0).collect();
        out.sort_by(|a, b| a.weakness(b));
        out
    }

    pub fn into_entries(self) -> Vec<BufferEntry<T>> {
        let mut out: Vec<_> = self.heap.into_iter().map(|w| w.0).collect();
        out.sort_by(|a, b| a.weakness(b));
        out
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for SelectionBuffer<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SelectionBuffer")
            .field("capacity", &self.capacity)
            .field("len", &self.heap.len())
            .field("arrivals", &self.arrivals)
            .field("evictions", &self.evictions)
            .finish()
    }
}
