use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::{trajectory_iou_3d, Trajectory};

/// 101-point interpolated average precision from a ranked list of hit/miss
/// flags against `num_gt` positives.
pub fn average_precision_101(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        if h {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    // Precision envelope from the right.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut total = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        if let Some(i) = recall.iter().position(|&rc| rc >= level - 1e-12) {
            total += precision[i];
        }
    }
    total / 101.0
}

/// Track mAP over sequences of `(ground truth, predictions)`.
///
/// Classes and scores come from [`Trajectory::top_class`]. Per class,
/// predictions from all sequences are ranked by score and each is matched
/// to the unmatched ground-truth trajectory of its own sequence with the
/// highest 3D IoU, provided it reaches `iou_thr`. Classes without ground
/// truth are left out of the mean.
pub fn track_map(sequences: &[(Vec<Trajectory>, Vec<Trajectory>)], iou_thr: f64) -> Result<f64> {
    let classes: BTreeSet<usize> = sequences
        .iter()
        .flat_map(|(gt, _)| gt.iter().map(|t| t.top_class().0))
        .collect();
    if classes.is_empty() {
        return Err(Error::UndefinedMetric("track mAP with no ground-truth trajectories".into()));
    }
    let mut sum = 0.0;
    for &c in &classes {
        let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
        let mut num_gt = 0;
        for (s, (gt, pred)) in sequences.iter().enumerate() {
            num_gt += gt.iter().filter(|t| t.top_class().0 == c).count();
            for (i, p) in pred.iter().enumerate() {
                let (pc, score) = p.top_class();
                if pc == c {
                    ranked.push((score, s, i));
                }
            }
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut used: Vec<Vec<bool>> = sequences.iter().map(|(gt, _)| vec![false; gt.len()]).collect();
        let mut hits = Vec::with_capacity(ranked.len());
        for &(_, s, i) in &ranked {
            let (gt, pred) = &sequences[s];
            let mut best: Option<(usize, f64)> = None;
            for (g, t) in gt.iter().enumerate() {
                if used[s][g] || t.top_class().0 != c {
                    continue;
                }
                let v = trajectory_iou_3d(t, &pred[i]);
                if v >= iou_thr && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                used[s][g] = true;
            }
            hits.push(best.is_some());
        }
        sum += average_precision_101(&hits, num_gt);
    }
    Ok(sum / classes.len() as f64)
}
