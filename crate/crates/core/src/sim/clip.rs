use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Trajectory};

/// Ground-truth tubes of one clip. `trajectories[k]` has id `k`, class
/// `classes[k]` and latent appearance `appearances[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthClip {
    pub num_frames: u32,
    pub trajectories: Vec<Trajectory>,
    pub classes: Vec<usize>,
    pub appearances: Vec<Vec<f64>>,
}

impl GroundTruthClip {
    pub fn validate(&self) -> Result<()> {
        let k = self.trajectories.len();
        if self.classes.len() != k || self.appearances.len() != k {
            return Err(Error::Contract(format!(
                "{k} trajectories but {} classes and {} appearances",
                self.classes.len(),
                self.appearances.len()
            )));
        }
        let mut ids: Vec<u64> = self.trajectories.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != k {
            return Err(Error::Contract("duplicate trajectory ids".into()));
        }
        for t in &self.trajectories {
            let first = t.first_frame().unwrap_or(0);
            let last = t.last_frame().unwrap_or(0);
            if first < 1 || last > self.num_frames {
                return Err(Error::Contract(format!(
                    "trajectory {} has slices outside [1, {}]",
                    t.id, self.num_frames
                )));
            }
        }
        Ok(())
    }

    /// Number of non-empty slices over all trajectories.
    pub fn num_boxes(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Trajectories carrying one-hot class scores over `num_classes`.
    pub fn labelled_trajectories(&self, num_classes: usize) -> Vec<Trajectory> {
        self.trajectories
            .iter()
            .zip(&self.classes)
            .map(|(t, &c)| {
                let mut scores = vec![0.0; num_classes.max(c + 1)];
                scores[c] = 1.0;
                t.clone().with_class_scores(scores)
            })
            .collect()
    }
}

/// One detected object in frame `frame` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub feature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_scores: Option<Vec<f64>>,
}

/// Per-frame detections; `frames[t - 1]` holds frame `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionClip {
    pub feature_dim: usize,
    pub frames: Vec<Vec<Detection>>,
}

impl DetectionClip {
    pub fn num_frames(&self) -> u32 {
        self.frames.len() as u32
    }

    pub fn num_detections(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn frame(&self, t: u32) -> &[Detection] {
        &self.frames[(t - 1) as usize]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, frame) in self.frames.iter().enumerate() {
            for d in frame {
                if d.frame as usize != i + 1 {
                    return Err(Error::Contract(format!(
                        "detection tagged frame {} stored in frame {}",
                        d.frame,
                        i + 1
                    )));
                }
                if d.feature.len() != self.feature_dim {
                    return Err(Error::Contract(format!(
                        "feature of length {} in a clip of dimension {}",
                        d.feature.len(),
                        self.feature_dim
                    )));
                }
                if !(d.confidence > 0.0 && d.confidence <= 1.0) {
                    return Err(Error::Contract(format!("confidence {} not in (0, 1]", d.confidence)));
                }
            }
        }
        Ok(())
    }

    /// Frames `first..=last` renumbered to start at 1.
    pub fn sub_clip(&self, first: u32, last: u32) -> Result<Self> {
        if first < 1 || last < first || last > self.num_frames() {
            return Err(Error::Range(format!(
                "frames {first}..={last} not inside 1..={}",
                self.num_frames()
            )));
        }
        let frames = (first..=last)
            .map(|t| {
                self.frame(t)
                    .iter()
                    .map(|d| Detection {
                        frame: t - first + 1,
                        ..d.clone()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            feature_dim: self.feature_dim,
            frames,
        })
    }
}

impl GroundTruthClip {
    /// Frames `first..=last` renumbered to start at 1; objects invisible in
    /// that range are dropped.
    pub fn sub_clip(&self, first: u32, last: u32) -> Result<Self> {
        if first < 1 || last < first || last > self.num_frames {
            return Err(Error::Range(format!(
                "frames {first}..={last} not inside 1..={}",
                self.num_frames
            )));
        }
        let mut out = Self {
            num_frames: last - first + 1,
            trajectories: Vec::new(),
            classes: Vec::new(),
            appearances: Vec::new(),
        };
        for (k, t) in self.trajectories.iter().enumerate() {
            let slices: std::collections::BTreeMap<u32, BBox> =
                t.slices.range(first..=last).map(|(f, b)| (f - first + 1, *b)).collect();
            if slices.is_empty() {
                continue;
            }
            out.trajectories.push(Trajectory::new(t.id, slices)?);
            out.classes.push(self.classes[k]);
            out.appearances.push(self.appearances[k].clone());
        }
        Ok(out)
    }
}
