use std::collections::BTreeMap;

use crate::geometry::{BBox, Trajectory};

/// Boxes of one frame, `(track index, box)`.
pub(crate) type FrameBoxes = Vec<(usize, BBox)>;

/// Per-frame view of a set of trajectories, keyed by frame.
pub(crate) fn by_frame(trajs: &[Trajectory]) -> BTreeMap<u32, FrameBoxes> {
    let mut out: BTreeMap<u32, FrameBoxes> = BTreeMap::new();
    for (k, t) in trajs.iter().enumerate() {
        for (f, b) in &t.slices {
            out.entry(*f).or_default().push((k, *b));
        }
    }
    out
}

/// Frames present on either side, ascending.
pub(crate) fn all_frames(
    gt: &BTreeMap<u32, FrameBoxes>,
    pred: &BTreeMap<u32, FrameBoxes>,
) -> Vec<u32> {
    let mut f: Vec<u32> = gt.keys().chain(pred.keys()).copied().collect();
    f.sort_unstable();
    f.dedup();
    f
}

pub(crate) fn iou_matrix(gt: &FrameBoxes, pred: &FrameBoxes) -> Vec<Vec<f64>> {
    gt.iter()
        .map(|(_, g)| pred.iter().map(|(_, p)| g.iou(p)).collect())
        .collect()
}
