use serde::{Deserialize, Serialize};

use super::clear::overlap_counts;
use crate::error::{Error, Result};
use crate::geometry::{hungarian, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Idf1 {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl Idf1 {
    pub(crate) fn from_counts(idtp: usize, idfp: usize, idfn: usize) -> Result<Self> {
        if idtp + idfn == 0 {
            return Err(Error::UndefinedMetric("IDF1 with no ground-truth boxes".into()));
        }
        let denom = 2 * idtp + idfp + idfn;
        Ok(Self {
            idf1: 2.0 * idtp as f64 / denom as f64,
            idtp,
            idfp,
            idfn,
        })
    }
}

/// Identity F1 under the one-to-one id matching that maximizes the number of
/// frames where matched ids overlap by at least `iou_thr`.
pub fn idf1(gt: &[Trajectory], pred: &[Trajectory], iou_thr: f64) -> Result<Idf1> {
    let n_gt: usize = gt.iter().map(Trajectory::len).sum();
    let n_pred: usize = pred.iter().map(Trajectory::len).sum();
    let counts = overlap_counts(gt, pred, iou_thr);
    let mut idtp = 0;
    if !gt.is_empty() && !pred.is_empty() {
        let cost: Vec<Vec<f64>> = (0..gt.len())
            .map(|g| (0..pred.len()).map(|p| -(*counts.get(&(g, p)).unwrap_or(&0) as f64)).collect())
            .collect();
        for (g, p) in hungarian(&cost)?.pairs() {
            idtp += counts.get(&(g, p)).copied().unwrap_or(0);
        }
    }
    Idf1::from_counts(idtp, n_pred - idtp, n_gt - idtp)
}
