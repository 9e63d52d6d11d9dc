use serde::{Deserialize, Serialize};

use super::frames::{all_frames, by_frame, iou_matrix};
use crate::error::{Error, Result};
use crate::geometry::{hungarian, Trajectory};

/// Localization thresholds 0.05, 0.10, .., 0.95.
pub fn hota_thresholds() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HotaAlpha {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hota {
    /// Means over the thresholds.
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub per_alpha: Vec<HotaAlpha>,
}

/// `√(DetA · AssA)`.
pub fn hota_alpha(deta: f64, assa: f64) -> f64 {
    (deta * assa).sqrt()
}

impl HotaAlpha {
    fn from_parts(alpha: f64, tp: usize, fn_: usize, fp: usize, assa: f64) -> Self {
        let deta = tp as f64 / (tp + fn_ + fp).max(1) as f64;
        Self {
            alpha,
            hota: hota_alpha(deta, assa),
            deta,
            assa,
            tp,
            fn_,
            fp,
        }
    }
}

impl Hota {
    fn from_alphas(per_alpha: Vec<HotaAlpha>) -> Self {
        let n = per_alpha.len().max(1) as f64;
        Self {
            hota: per_alpha.iter().map(|a| a.hota).sum::<f64>() / n,
            deta: per_alpha.iter().map(|a| a.deta).sum::<f64>() / n,
            assa: per_alpha.iter().map(|a| a.assa).sum::<f64>() / n,
            per_alpha,
        }
    }

    /// Pools sequences: detection counts are summed and AssA is averaged
    /// with weights `TP`.
    pub fn combine(parts: &[Hota]) -> Result<Hota> {
        let first = parts
            .first()
            .ok_or_else(|| Error::UndefinedMetric("HOTA of zero sequences".into()))?;
        let alphas = first
            .per_alpha
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let (mut tp, mut fn_, mut fp, mut weighted) = (0, 0, 0, 0.0);
                for p in parts {
                    let x = &p.per_alpha[i];
                    tp += x.tp;
                    fn_ += x.fn_;
                    fp += x.fp;
                    weighted += x.assa * x.tp as f64;
                }
                HotaAlpha::from_parts(a.alpha, tp, fn_, fp, weighted / tp.max(1) as f64)
            })
            .collect();
        Ok(Hota::from_alphas(alphas))
    }

    /// Values at the threshold closest to `alpha`.
    pub fn at(&self, alpha: f64) -> Option<&HotaAlpha> {
        self.per_alpha
            .iter()
            .min_by(|a, b| (a.alpha - alpha).abs().total_cmp(&(b.alpha - alpha).abs()))
    }
}

/// HOTA with its detection and association components.
///
/// Frames are matched by Hungarian on `IoU × global alignment score`, where
/// the alignment between a ground-truth and a predicted id is their
/// IoU-weighted co-occurrence Jaccard over the whole sequence; a match
/// counts at threshold `α` when its IoU is at least `α`. AssA at `α` is the
/// mean over true positives of the id-pair Jaccard
/// `TPA / (TPA + FNA + FPA)`.
pub fn hota(gt: &[Trajectory], pred: &[Trajectory], thresholds: &[f64]) -> Result<Hota> {
    let g_frames = by_frame(gt);
    let p_frames = by_frame(pred);
    let (ng, np) = (gt.len(), pred.len());
    let n_gt: usize = gt.iter().map(Trajectory::len).sum();
    if n_gt == 0 {
        return Err(Error::UndefinedMetric("HOTA with no ground-truth boxes".into()));
    }
    let gt_count: Vec<f64> = gt.iter().map(|t| t.len() as f64).collect();
    let pr_count: Vec<f64> = pred.iter().map(|t| t.len() as f64).collect();
    let frames = all_frames(&g_frames, &p_frames);
    let empty = Vec::new();

    let mut potential = vec![vec![0.0; np]; ng];
    for f in &frames {
        let gb = g_frames.get(f).unwrap_or(&empty);
        let pb = p_frames.get(f).unwrap_or(&empty);
        let sim = iou_matrix(gb, pb);
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..pb.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for (i, (gk, _)) in gb.iter().enumerate() {
            for (j, (pk, _)) in pb.iter().enumerate() {
                let denom = row_sum[i] + col_sum[j] - sim[i][j];
                if denom > 0.0 {
                    potential[*gk][*pk] += sim[i][j] / denom;
                }
            }
        }
    }
    let alignment: Vec<Vec<f64>> = (0..ng)
        .map(|g| {
            (0..np)
                .map(|p| {
                    let d = gt_count[g] + pr_count[p] - potential[g][p];
                    if d > 0.0 {
                        potential[g][p] / d
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let na = thresholds.len();
    let mut tp = vec![0usize; na];
    let mut fn_ = vec![0usize; na];
    let mut fp = vec![0usize; na];
    let mut matches = vec![vec![vec![0.0f64; np]; ng]; na];
    for f in &frames {
        let gb = g_frames.get(f).unwrap_or(&empty);
        let pb = p_frames.get(f).unwrap_or(&empty);
        let sim = iou_matrix(gb, pb);
        let mut pairs = Vec::new();
        if !gb.is_empty() && !pb.is_empty() {
            let cost: Vec<Vec<f64>> = gb
                .iter()
                .enumerate()
                .map(|(i, (gk, _))| {
                    pb.iter()
                        .enumerate()
                        .map(|(j, (pk, _))| -alignment[*gk][*pk] * sim[i][j])
                        .collect()
                })
                .collect();
            pairs = hungarian(&cost)?.pairs().collect();
        }
        for (a, &alpha) in thresholds.iter().enumerate() {
            let mut n = 0;
            for &(i, j) in &pairs {
                if sim[i][j] >= alpha - f64::EPSILON {
                    n += 1;
                    matches[a][gb[i].0][pb[j].0] += 1.0;
                }
            }
            tp[a] += n;
            fn_[a] += gb.len() - n;
            fp[a] += pb.len() - n;
        }
    }

    let per_alpha = thresholds
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let mut acc = 0.0;
            for g in 0..ng {
                for p in 0..np {
                    let m = matches[a][g][p];
                    if m > 0.0 {
                        acc += m * m / (gt_count[g] + pr_count[p] - m);
                    }
                }
            }
            HotaAlpha::from_parts(alpha, tp[a], fn_[a], fp[a], acc / tp[a].max(1) as f64)
        })
        .collect();
    Ok(Hota::from_alphas(per_alpha))
}
