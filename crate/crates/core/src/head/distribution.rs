use super::forward::stack_rows;
use super::params::GtrParams;
use super::partition::FramePartition;
use crate::autodiff::Graph;
use crate::error::{Error, Result};

/// Score matrix `G` (queries × detections) with its frame partition.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationScores {
    pub rows: usize,
    pub partition: FramePartition,
    /// Row-major, `rows × partition.total()`.
    pub data: Vec<f64>,
}

impl AssociationScores {
    pub fn new(rows: usize, partition: FramePartition, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * partition.total() {
            return Err(Error::shape(
                "association_scores",
                format!("{} values for {rows}×{}", data.len(), partition.total()),
            ));
        }
        Ok(Self { rows, partition, data })
    }

    pub fn cols(&self) -> usize {
        self.partition.total()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

/// Per query and frame, probabilities over `[∅, detection 0, ..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationDistribution {
    pub partition: FramePartition,
    /// `probs[query][frame]` has length `N_t + 1`; entry 0 is `∅`.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl AssociationDistribution {
    pub fn num_queries(&self) -> usize {
        self.probs.len()
    }

    /// `P_A(index | query)` at `frame`; `None` is the empty token.
    pub fn prob(&self, query: usize, frame: usize, index: Option<usize>) -> f64 {
        self.probs[query][frame][index.map_or(0, |i| i + 1)]
    }

    /// Most likely entry at `frame`; ties go to `∅`, then the lowest index.
    pub fn argmax(&self, query: usize, frame: usize) -> Option<usize> {
        let p = &self.probs[query][frame];
        let mut best = 0;
        for (i, &v) in p.iter().enumerate().skip(1) {
            if v > p[best] {
                best = i;
            }
        }
        best.checked_sub(1)
    }
}

/// Log-softmax over `[0, logits...]`.
fn log_softmax_with_empty(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(0.0f64, f64::max);
    let mut terms = Vec::with_capacity(logits.len() + 1);
    terms.push((-m).exp());
    terms.extend(logits.iter().map(|v| (v - m).exp()));
    let lse = m + crate::autodiff::stable_sum(terms).ln();
    std::iter::once(-lse).chain(logits.iter().map(|v| v - lse)).collect()
}

/// Independent softmax per query and frame with the empty token's logit
/// fixed at 0.
pub fn association_distribution(scores: &AssociationScores) -> AssociationDistribution {
    let part = &scores.partition;
    let probs = (0..scores.rows)
        .map(|r| {
            let row = scores.row(r);
            (0..part.num_frames())
                .map(|t| {
                    log_softmax_with_empty(&row[part.range(t)])
                        .into_iter()
                        .map(f64::exp)
                        .collect()
                })
                .collect()
        })
        .collect();
    AssociationDistribution {
        partition: part.clone(),
        probs,
    }
}

/// `Σ_t log P_A(assignment[t] | query)`.
pub fn trajectory_loglik(dist: &AssociationDistribution, assignment: &[Option<usize>], query: usize) -> Result<f64> {
    let part = &dist.partition;
    if query >= dist.num_queries() {
        return Err(Error::Contract(format!("query {query} of {}", dist.num_queries())));
    }
    if assignment.len() != part.num_frames() {
        return Err(Error::Contract(format!(
            "assignment covers {} frames, distribution {}",
            assignment.len(),
            part.num_frames()
        )));
    }
    let mut total = 0.0;
    for (t, a) in assignment.iter().enumerate() {
        if let Some(i) = a {
            if *i >= part.count(t) {
                return Err(Error::Contract(format!(
                    "index {i} at frame {t} with {} detections",
                    part.count(t)
                )));
            }
        }
        total += dist.prob(query, t, *a).ln();
    }
    Ok(total)
}

impl GtrParams {
    /// `G` for one window without keeping the graph. Empty query or feature
    /// sets give an empty score matrix.
    pub fn association_scores(
        &self,
        features: &[&[f64]],
        partition: &FramePartition,
        queries: &[&[f64]],
        query_frames: &[usize],
    ) -> Result<AssociationScores> {
        if features.len() != partition.total() {
            return Err(Error::Contract(format!(
                "partition covers {} columns but there are {} features",
                partition.total(),
                features.len()
            )));
        }
        if queries.is_empty() || features.is_empty() {
            return AssociationScores::new(queries.len(), partition.clone(), Vec::new());
        }
        let d = self.config.dim;
        let f = stack_rows(features.iter().copied(), d)?;
        let q = stack_rows(queries.iter().copied(), d)?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &f, partition, &q, query_frames)?;
        AssociationScores::new(queries.len(), partition.clone(), g.value(out.scores).data().to_vec())
    }
}
