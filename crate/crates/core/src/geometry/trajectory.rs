use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

/// Identity-labelled tube of boxes. Frames missing from `slices` are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub slices: BTreeMap<u32, BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_scores: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(id: u64, slices: BTreeMap<u32, BBox>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Contract(format!("trajectory {id} has no slices")));
        }
        Ok(Self {
            id,
            slices,
            class_scores: None,
        })
    }

    pub fn with_class_scores(mut self, scores: Vec<f64>) -> Self {
        self.class_scores = Some(scores);
        self
    }

    pub fn get(&self, frame: u32) -> Option<&BBox> {
        self.slices.get(&frame)
    }

    /// Number of non-empty slices.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.slices.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.slices.keys().next_back().copied()
    }

    /// Category index and its score: the arg-max of `class_scores`, ties going
    /// to the highest index. Trajectories without scores are class 0, score 1.
    pub fn top_class(&self) -> (usize, f64) {
        match &self.class_scores {
            Some(scores) if !scores.is_empty() => {
                let mut best = (0, scores[0]);
                for (i, &s) in scores.iter().enumerate().skip(1) {
                    if s >= best.1 {
                        best = (i, s);
                    }
                }
                best
            }
            _ => (0, 1.0),
        }
    }
}

/// Spatio-temporal IoU `Σ_t inter / Σ_t union`.
///
/// A frame where only one side has a box contributes that box's area to the
/// union and nothing to the intersection; frames empty on both sides
/// contribute nothing.
pub fn trajectory_iou_3d(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut inter = 0.0;
    let mut union = 0.0;
    for (frame, ba) in &a.slices {
        match b.slices.get(frame) {
            Some(bb) => {
                let i = ba.intersection(bb);
                inter += i;
                union += ba.area() + bb.area() - i;
            }
            None => union += ba.area(),
        }
    }
    for (frame, bb) in &b.slices {
        if !a.slices.contains_key(frame) {
            union += bb.area();
        }
    }
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
