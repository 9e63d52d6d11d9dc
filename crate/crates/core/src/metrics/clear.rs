use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::frames::{all_frames, by_frame, iou_matrix};
use crate::error::{Error, Result};
use crate::geometry::{hungarian, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearMot {
    pub mota: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub matches: usize,
    pub num_gt: usize,
}

impl ClearMot {
    pub(crate) fn from_counts(fp: usize, fn_: usize, idsw: usize, matches: usize, num_gt: usize) -> Result<Self> {
        if num_gt == 0 {
            return Err(Error::UndefinedMetric("MOTA with no ground-truth boxes".into()));
        }
        Ok(Self {
            mota: 1.0 - (fp + fn_ + idsw) as f64 / num_gt as f64,
            false_positives: fp,
            false_negatives: fn_,
            id_switches: idsw,
            matches,
            num_gt,
        })
    }
}

/// CLEAR-MOT counts and MOTA.
///
/// Per frame, a ground-truth object keeps its last matched prediction if
/// that prediction is present and still overlaps by at least `iou_thr`; the
/// rest are matched by Hungarian on `1 - IoU` over pairs with IoU at least
/// `iou_thr`. A match whose prediction differs from the object's previous
/// match is an identity switch.
pub fn clear_mot(gt: &[Trajectory], pred: &[Trajectory], iou_thr: f64) -> Result<ClearMot> {
    let g_frames = by_frame(gt);
    let p_frames = by_frame(pred);
    let empty = Vec::new();
    let mut last: HashMap<u64, u64> = HashMap::new();
    let (mut fp, mut fn_, mut idsw, mut matches, mut num_gt) = (0, 0, 0, 0, 0);

    for f in all_frames(&g_frames, &p_frames) {
        let gb = g_frames.get(&f).unwrap_or(&empty);
        let pb = p_frames.get(&f).unwrap_or(&empty);
        num_gt += gb.len();
        let iou = iou_matrix(gb, pb);
        let mut g_used = vec![false; gb.len()];
        let mut p_used = vec![false; pb.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (gi, (gk, _)) in gb.iter().enumerate() {
            let Some(&pid) = last.get(&gt[*gk].id) else { continue };
            if let Some(pi) = pb.iter().position(|(pk, _)| pred[*pk].id == pid) {
                if !p_used[pi] && iou[gi][pi] >= iou_thr {
                    g_used[gi] = true;
                    p_used[pi] = true;
                    pairs.push((gi, pi));
                }
            }
        }

        let g_rest: Vec<usize> = (0..gb.len()).filter(|&i| !g_used[i]).collect();
        let p_rest: Vec<usize> = (0..pb.len()).filter(|&i| !p_used[i]).collect();
        if !g_rest.is_empty() && !p_rest.is_empty() {
            let cost: Vec<Vec<f64>> = g_rest
                .iter()
                .map(|&gi| {
                    p_rest
                        .iter()
                        .map(|&pi| if iou[gi][pi] >= iou_thr { 1.0 - iou[gi][pi] } else { 2.0 })
                        .collect()
                })
                .collect();
            for (r, c) in hungarian(&cost)?.pairs() {
                let (gi, pi) = (g_rest[r], p_rest[c]);
                if iou[gi][pi] >= iou_thr {
                    pairs.push((gi, pi));
                }
            }
        }

        for &(gi, pi) in &pairs {
            let gid = gt[gb[gi].0].id;
            let pid = pred[pb[pi].0].id;
            if let Some(prev) = last.insert(gid, pid) {
                if prev != pid {
                    idsw += 1;
                }
            }
        }
        matches += pairs.len();
        fn_ += gb.len() - pairs.len();
        fp += pb.len() - pairs.len();
    }
    ClearMot::from_counts(fp, fn_, idsw, matches, num_gt)
}

/// Frames in which ground-truth and predicted boxes overlap by at least
/// `iou_thr`, for every (ground truth, prediction) pair of indices.
pub(crate) fn overlap_counts(gt: &[Trajectory], pred: &[Trajectory], iou_thr: f64) -> BTreeMap<(usize, usize), usize> {
    let g_frames = by_frame(gt);
    let p_frames = by_frame(pred);
    let mut counts = BTreeMap::new();
    for (f, gb) in &g_frames {
        let Some(pb) = p_frames.get(f) else { continue };
        for (gk, g) in gb {
            for (pk, p) in pb {
                if g.iou(p) >= iou_thr {
                    *counts.entry((*gk, *pk)).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}
