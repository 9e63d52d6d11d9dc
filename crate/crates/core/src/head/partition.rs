use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split of `N` columns (detections) into consecutive per-frame blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePartition {
    counts: Vec<usize>,
    starts: Vec<usize>,
}

impl FramePartition {
    pub fn new(counts: Vec<usize>) -> Self {
        let mut starts = Vec::with_capacity(counts.len());
        let mut next = 0;
        for &c in &counts {
            starts.push(next);
            next += c;
        }
        Self { counts, starts }
    }

    pub fn num_frames(&self) -> usize {
        self.counts.len()
    }

    /// `N = Σ N_t`.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, t: usize) -> usize {
        self.counts[t]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn range(&self, t: usize) -> std::ops::Range<usize> {
        self.starts[t]..self.starts[t] + self.counts[t]
    }

    /// `(start, len)` per frame, the form the graph's grouped softmax takes.
    pub fn groups(&self) -> Vec<(usize, usize)> {
        self.starts.iter().copied().zip(self.counts.iter().copied()).collect()
    }

    /// Frame and in-frame index of global column `col`.
    pub fn locate(&self, col: usize) -> Result<(usize, usize)> {
        for t in 0..self.counts.len() {
            if self.range(t).contains(&col) {
                return Ok((t, col - self.starts[t]));
            }
        }
        Err(Error::Contract(format!("column {col} outside a partition of {}", self.total())))
    }

    /// Global column of detection `index` in frame `t`.
    pub fn column(&self, t: usize, index: usize) -> Result<usize> {
        if t >= self.counts.len() || index >= self.counts[t] {
            return Err(Error::Contract(format!("detection {index} of frame {t} does not exist")));
        }
        Ok(self.starts[t] + index)
    }

    /// Frame of every column, in column order.
    pub fn frame_of_columns(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| std::iter::repeat_n(t, c))
            .collect()
    }
}
