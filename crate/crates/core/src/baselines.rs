//! Greedy frame-to-frame trackers with track rebirth, run on the same
//! detections as the transformer tracker.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::hungarian;
use crate::sim::{Detection, DetectionClip};
use crate::tracker::{Track, TrackSlice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMode {
    #[serde(rename = "iou")]
    Iou,
    #[serde(rename = "reid")]
    Reid,
    #[serde(rename = "iou+reid")]
    IouReid,
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iou" => Ok(Self::Iou),
            "reid" => Ok(Self::Reid),
            "iou+reid" => Ok(Self::IouReid),
            other => Err(Error::Config(format!("unknown baseline mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub mode: BaselineMode,
    /// Minimum IoU with the track's last box.
    pub iou_threshold: f64,
    /// Minimum cosine similarity with the track's feature average.
    pub reid_threshold: f64,
    /// A track unmatched for more than this many frames is retired.
    pub rebirth: u32,
    pub score_threshold: f64,
    /// Momentum of the feature exponential moving average.
    pub ema: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mode: BaselineMode::Iou,
            iou_threshold: 0.3,
            reid_threshold: 0.4,
            rebirth: 30,
            score_threshold: 0.55,
            ema: 0.9,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::Config(format!("IoU threshold {} not in [0, 1]", self.iou_threshold)));
        }
        if !(-1.0..=1.0).contains(&self.reid_threshold) {
            return Err(Error::Config(format!("ReID threshold {} not in [-1, 1]", self.reid_threshold)));
        }
        if !(0.0..1.0).contains(&self.ema) {
            return Err(Error::Config(format!("EMA momentum {} not in [0, 1)", self.ema)));
        }
        Ok(())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

struct LiveTrack {
    track: Track,
    feature: Vec<f64>,
    last_seen: u32,
}

impl LiveTrack {
    fn push(&mut self, frame: u32, det: &Detection, detection: usize, source: usize, ema: f64) {
        self.track.slices.insert(
            frame,
            TrackSlice {
                bbox: det.bbox,
                confidence: det.confidence,
                class_scores: det.class_scores.clone(),
                detection,
                source,
            },
        );
        for (f, x) in self.feature.iter_mut().zip(&det.feature) {
            *f = ema * *f + (1.0 - ema) * x;
        }
        self.last_seen = frame;
    }

    /// Matching cost, `None` when every enabled cue is below its gate.
    fn cost(&self, det: &Detection, cfg: &BaselineConfig) -> Option<f64> {
        let last = self.track.slices.get(&self.last_seen).map(|s| s.bbox)?;
        let iou_cost = || {
            let v = last.iou(&det.bbox);
            (v >= cfg.iou_threshold).then_some(1.0 - v)
        };
        let reid_cost = || {
            let v = cosine(&self.feature, &det.feature);
            (v >= cfg.reid_threshold).then_some(1.0 - v)
        };
        match cfg.mode {
            BaselineMode::Iou => iou_cost(),
            BaselineMode::Reid => reid_cost(),
            BaselineMode::IouReid => match (iou_cost(), reid_cost()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
        }
    }
}

/// Tracks a clip greedily: every frame, live tracks last seen at most
/// `rebirth` frames ago are matched to the frame's detections by Hungarian
/// on the gated cost; unmatched detections start tracks with ids from 1.
pub fn greedy_track(clip: &DetectionClip, cfg: &BaselineConfig) -> Result<Vec<Track>> {
    cfg.validate()?;
    let mut live: Vec<LiveTrack> = Vec::new();
    let mut retired: Vec<Track> = Vec::new();
    let mut next_id = 1u64;

    for (i, dets) in clip.frames.iter().enumerate() {
        let frame = i as u32 + 1;
        let (retire, keep): (Vec<LiveTrack>, Vec<LiveTrack>) = live
            .into_iter()
            .partition(|t| frame - t.last_seen - 1 > cfg.rebirth);
        retired.extend(retire.into_iter().map(|t| t.track));
        live = keep;

        let kept: Vec<(usize, &Detection)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.confidence >= cfg.score_threshold)
            .collect();
        let mut owner: Vec<Option<usize>> = vec![None; kept.len()];
        if !live.is_empty() && !kept.is_empty() {
            let gated: Vec<Vec<Option<f64>>> = live
                .iter()
                .map(|t| kept.iter().map(|(_, d)| t.cost(d, cfg)).collect())
                .collect();
            let cost: Vec<Vec<f64>> = gated
                .iter()
                .map(|r| r.iter().map(|c| c.unwrap_or(1e6)).collect())
                .collect();
            for (r, c) in hungarian(&cost)?.pairs() {
                if gated[r][c].is_some() {
                    owner[c] = Some(r);
                }
            }
        }
        for (q, (source, det)) in kept.iter().enumerate() {
            match owner[q] {
                Some(r) => live[r].push(frame, det, q, *source, cfg.ema),
                None => {
                    let mut t = LiveTrack {
                        track: Track {
                            id: next_id,
                            slices: BTreeMap::new(),
                        },
                        feature: det.feature.clone(),
                        last_seen: frame,
                    };
                    t.push(frame, det, q, *source, 0.0);
                    live.push(t);
                    next_id += 1;
                }
            }
        }
    }
    retired.extend(live.into_iter().map(|t| t.track));
    retired.sort_by_key(|t| t.id);
    Ok(retired)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn det(frame: u32, x: f64, feature: Vec<f64>) -> Detection {
        Detection {
            frame,
            bbox: BBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
            confidence: 0.9,
            feature,
            class_scores: None,
        }
    }

    /// One object at x = 0 visible on the listed frames of a `len`-frame clip.
    fn gappy(len: u32, visible: impl Fn(u32) -> bool) -> DetectionClip {
        DetectionClip {
            feature_dim: 2,
            frames: (1..=len)
                .map(|f| if visible(f) { vec![det(f, 0.0, vec![1.0, 0.0])] } else { vec![] })
                .collect(),
        }
    }

    #[test]
    fn static_boxes_keep_their_ids() {
        let clip = DetectionClip {
            feature_dim: 2,
            frames: (1..=10)
                .map(|f| vec![det(f, 100.0, vec![0.0, 1.0]), det(f, 0.0, vec![1.0, 0.0])])
                .collect(),
        };
        for mode in [BaselineMode::Iou, BaselineMode::Reid, BaselineMode::IouReid] {
            let cfg = BaselineConfig {
                mode,
                ..BaselineConfig::default()
            };
            let tracks = greedy_track(&clip, &cfg).unwrap();
            assert_eq!(tracks.len(), 2, "{mode:?}");
            assert!(tracks.iter().all(|t| t.len() == 10));
        }
    }

    #[test]
    fn rebirth_bridges_short_gaps_only() {
        let cfg = BaselineConfig::default();
        let short = gappy(10, |f| !(4..=5).contains(&f));
        assert_eq!(greedy_track(&short, &cfg).unwrap().len(), 1);
        let long = gappy(50, |f| !(5..45).contains(&f));
        assert_eq!(greedy_track(&long, &cfg).unwrap().len(), 2);
        // Exactly `rebirth` missed frames is still bridged.
        let edge = gappy(40, |f| !(5..35).contains(&f));
        assert_eq!(greedy_track(&edge, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn zero_rebirth_splits_on_a_single_miss() {
        let cfg = BaselineConfig {
            rebirth: 0,
            ..BaselineConfig::default()
        };
        let clip = gappy(6, |f| f != 3);
        let tracks = greedy_track(&clip, &cfg).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].slices.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn gates_reject_distant_matches() {
        let clip = DetectionClip {
            feature_dim: 2,
            frames: vec![vec![det(1, 0.0, vec![1.0, 0.0])], vec![det(2, 50.0, vec![0.0, 1.0])]],
        };
        for mode in [BaselineMode::Iou, BaselineMode::Reid, BaselineMode::IouReid] {
            let cfg = BaselineConfig {
                mode,
                ..BaselineConfig::default()
            };
            assert_eq!(greedy_track(&clip, &cfg).unwrap().len(), 2);
        }
    }

    #[test]
    fn mode_parses() {
        assert_eq!("iou+reid".parse::<BaselineMode>().unwrap(), BaselineMode::IouReid);
        assert!("sort".parse::<BaselineMode>().is_err());
        let cfg: BaselineConfig = serde_json::from_str(r#"{"mode":"reid","rebirth":5}"#).unwrap();
        assert_eq!((cfg.mode, cfg.rebirth), (BaselineMode::Reid, 5));
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
            s in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((cosine(&a, &b) - cosine(&scaled, &b)).abs() < 1e-12);
        }
    }
}
