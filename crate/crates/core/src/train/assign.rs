use crate::error::{Error, Result};
use crate::sim::{DetectionClip, GroundTruthClip};

/// Minimum IoU for a detection to take a ground-truth identity.
pub const ASSIGN_IOU: f64 = 0.5;

/// Ground-truth labels of every detection of a clip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipAssignment {
    /// `tracks[k][t]` is the detection of frame `t + 1` assigned to
    /// ground-truth trajectory `k`.
    pub tracks: Vec<Vec<Option<usize>>>,
    /// Ids of the ground-truth trajectories, parallel to `tracks`.
    pub track_ids: Vec<u64>,
    /// `detections[t][i]` is the trajectory owning detection `i` of frame
    /// `t + 1`, `None` for background.
    pub detections: Vec<Vec<Option<usize>>>,
}

impl ClipAssignment {
    pub fn num_frames(&self) -> usize {
        self.detections.len()
    }

    /// Ground-truth id of detection `index` in frame `frame` (1-based).
    pub fn label(&self, frame: u32, index: usize) -> Option<u64> {
        self.detections[(frame - 1) as usize][index].map(|k| self.track_ids[k])
    }
}

/// Each trajectory takes its best-overlapping detection when that IoU is at
/// least 0.5 (ties to the lower detection index). A detection wanted by
/// several trajectories goes to the highest IoU, then the lower trajectory
/// index; the others get `∅` for that frame.
pub fn assign_gt(dets: &DetectionClip, gt: &GroundTruthClip) -> Result<ClipAssignment> {
    if dets.num_frames() != gt.num_frames {
        return Err(Error::Contract(format!(
            "{} detection frames against {} ground-truth frames",
            dets.num_frames(),
            gt.num_frames
        )));
    }
    let frames = gt.num_frames as usize;
    let k_count = gt.trajectories.len();
    let mut tracks = vec![vec![None; frames]; k_count];
    let mut detections: Vec<Vec<Option<usize>>> = dets.frames.iter().map(|f| vec![None; f.len()]).collect();

    for t in 0..frames {
        let frame_dets = &dets.frames[t];
        // (trajectory, detection, iou) proposals.
        let mut best: Vec<(usize, usize, f64)> = Vec::new();
        for (k, traj) in gt.trajectories.iter().enumerate() {
            let Some(b) = traj.get(t as u32 + 1) else { continue };
            let mut top: Option<(usize, f64)> = None;
            for (i, d) in frame_dets.iter().enumerate() {
                let v = d.bbox.iou(b);
                if top.is_none_or(|(_, bv)| v > bv) {
                    top = Some((i, v));
                }
            }
            if let Some((i, v)) = top {
                if v >= ASSIGN_IOU {
                    best.push((k, i, v));
                }
            }
        }
        for &(k, i, v) in &best {
            let wins = best
                .iter()
                .filter(|&&(k2, i2, _)| i2 == i && k2 != k)
                .all(|&(k2, _, v2)| v > v2 || (v == v2 && k < k2));
            if wins {
                tracks[k][t] = Some(i);
                detections[t][i] = Some(k);
            }
        }
    }
    Ok(ClipAssignment {
        tracks,
        track_ids: gt.trajectories.iter().map(|t| t.id).collect(),
        detections,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::geometry::{BBox, Trajectory};
    use crate::sim::Detection;

    fn det(frame: u32, b: BBox) -> Detection {
        Detection {
            frame,
            bbox: b,
            confidence: 1.0,
            feature: vec![0.0],
            class_scores: None,
        }
    }

    fn bx(x: f64) -> BBox {
        BBox::new(x, 0.0, x + 10.0, 10.0).unwrap()
    }

    fn gt_of(boxes: &[BBox]) -> GroundTruthClip {
        GroundTruthClip {
            num_frames: 1,
            trajectories: boxes
                .iter()
                .enumerate()
                .map(|(k, b)| Trajectory::new(k as u64, BTreeMap::from([(1, *b)])).unwrap())
                .collect(),
            classes: vec![0; boxes.len()],
            appearances: vec![vec![0.0]; boxes.len()],
        }
    }

    fn clip(boxes: &[BBox]) -> DetectionClip {
        DetectionClip {
            feature_dim: 1,
            frames: vec![boxes.iter().map(|b| det(1, *b)).collect()],
        }
    }

    #[test]
    fn exact_box_is_assigned() {
        let a = assign_gt(&clip(&[bx(50.0), bx(0.0)]), &gt_of(&[bx(0.0)])).unwrap();
        assert_eq!(a.tracks[0][0], Some(1));
        assert_eq!(a.detections[0], vec![None, Some(0)]);
        assert_eq!(a.label(1, 1), Some(0));
    }

    #[test]
    fn threshold_is_half_iou() {
        // Shift s of a width-10 box gives IoU (10 - s) / (10 + s).
        let below = 10.0 * (1.0 - 0.49) / (1.0 + 0.49);
        let a = assign_gt(&clip(&[bx(below)]), &gt_of(&[bx(0.0)])).unwrap();
        assert_eq!(a.tracks[0][0], None);
        let at = 10.0 / 3.0;
        let a = assign_gt(&clip(&[bx(at - 1e-9)]), &gt_of(&[bx(0.0)])).unwrap();
        assert_eq!(a.tracks[0][0], Some(0));
        // IoU 0.4.
        let s = 10.0 * 0.6 / 1.4;
        let a = assign_gt(&clip(&[bx(s)]), &gt_of(&[bx(0.0)])).unwrap();
        assert_eq!(a.tracks[0][0], None);
    }

    #[test]
    fn conflict_goes_to_higher_iou() {
        // Detection at x=1 overlaps GT 0 (x=0, IoU 9/11) and GT 1 (x=3, IoU 8/12).
        let a = assign_gt(&clip(&[bx(1.0)]), &gt_of(&[bx(3.0), bx(0.0)])).unwrap();
        assert_eq!(a.tracks[1][0], Some(0));
        assert_eq!(a.tracks[0][0], None);
        assert_eq!(a.detections[0], vec![Some(1)]);
    }

    #[test]
    fn frame_mismatch_rejected() {
        let mut g = gt_of(&[bx(0.0)]);
        g.num_frames = 2;
        assert!(assign_gt(&clip(&[bx(0.0)]), &g).is_err());
    }
}
