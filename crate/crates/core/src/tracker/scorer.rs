use std::collections::HashMap;

use crate::error::Result;
use crate::head::{association_distribution, AssociationDistribution, AssociationScores, FramePartition, GtrParams};
use crate::sim::Detection;
use crate::train::ClipAssignment;

/// One buffered frame: the detections that passed the score threshold and
/// their indices in the original clip frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowFrame {
    pub frame: u32,
    pub detections: Vec<Detection>,
    pub source: Vec<usize>,
}

pub fn window_partition(window: &[WindowFrame]) -> FramePartition {
    FramePartition::new(window.iter().map(|f| f.detections.len()).collect())
}

/// Anything that turns a window into association distributions for the
/// detections of its last frame.
pub trait AssociationScorer {
    fn distribution(&self, window: &[WindowFrame]) -> Result<AssociationDistribution>;
}

impl AssociationScorer for GtrParams {
    fn distribution(&self, window: &[WindowFrame]) -> Result<AssociationDistribution> {
        let part = window_partition(window);
        let features: Vec<&[f64]> = window
            .iter()
            .flat_map(|f| f.detections.iter().map(|d| d.feature.as_slice()))
            .collect();
        let last = window.len().saturating_sub(1);
        let queries: Vec<&[f64]> = window
            .last()
            .map(|f| f.detections.iter().map(|d| d.feature.as_slice()).collect())
            .unwrap_or_default();
        let frames = vec![last; queries.len()];
        let scores = self.association_scores(&features, &part, &queries, &frames)?;
        Ok(association_distribution(&scores))
    }
}

/// Scores from ground-truth identities: `+LOGIT` between detections of the
/// same object and `-LOGIT` otherwise, so each distribution is one-hot up
/// to `e^-LOGIT`.
#[derive(Clone, Debug, Default)]
pub struct OracleScorer {
    labels: HashMap<(u32, usize), u64>,
}

impl OracleScorer {
    pub const LOGIT: f64 = 50.0;

    /// Labels keyed by (frame, index in the original clip frame).
    pub fn new(labels: HashMap<(u32, usize), u64>) -> Self {
        Self { labels }
    }

    pub fn from_assignment(assign: &ClipAssignment) -> Self {
        let mut labels = HashMap::new();
        for (t, frame) in assign.detections.iter().enumerate() {
            for (i, owner) in frame.iter().enumerate() {
                if let Some(k) = owner {
                    labels.insert((t as u32 + 1, i), assign.track_ids[*k]);
                }
            }
        }
        Self { labels }
    }

    fn label(&self, frame: &WindowFrame, i: usize) -> Option<u64> {
        self.labels.get(&(frame.frame, frame.source[i])).copied()
    }
}

impl AssociationScorer for OracleScorer {
    fn distribution(&self, window: &[WindowFrame]) -> Result<AssociationDistribution> {
        let part = window_partition(window);
        let Some(last) = window.last() else {
            return Ok(association_distribution(&AssociationScores::new(0, part, Vec::new())?));
        };
        let mut data = Vec::with_capacity(last.detections.len() * part.total());
        for q in 0..last.detections.len() {
            let ql = self.label(last, q);
            for f in window {
                for i in 0..f.detections.len() {
                    let same = ql.is_some() && ql == self.label(f, i);
                    data.push(if same { Self::LOGIT } else { -Self::LOGIT });
                }
            }
        }
        Ok(association_distribution(&AssociationScores::new(last.detections.len(), part, data)?))
    }
}
