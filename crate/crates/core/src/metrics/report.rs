use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::clear::{clear_mot, ClearMot};
use super::hota::{hota, hota_thresholds, Hota};
use super::idf1::{idf1, Idf1};
use super::track_map::track_map;
use crate::error::Result;
use crate::geometry::Trajectory;

/// IoU threshold of CLEAR-MOT, IDF1 and track mAP.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mota: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub num_gt: usize,
    pub idf1: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    /// HOTA components at IoU 0.5.
    pub hota_50: f64,
    pub deta_50: f64,
    pub assa_50: f64,
    pub track_map_50: f64,
    #[serde(skip)]
    parts: Option<Parts>,
}

#[derive(Clone, Debug, PartialEq)]
struct Parts {
    clear: ClearMot,
    idf1: Idf1,
    hota: Hota,
}

impl MetricsReport {
    fn from_parts(clear: ClearMot, id: Idf1, h: Hota, track_map_50: f64) -> Self {
        let at = h.at(0.5).cloned().expect("non-empty threshold grid");
        Self {
            mota: clear.mota,
            false_positives: clear.false_positives,
            false_negatives: clear.false_negatives,
            id_switches: clear.id_switches,
            num_gt: clear.num_gt,
            idf1: id.idf1,
            hota: h.hota,
            deta: h.deta,
            assa: h.assa,
            hota_50: at.hota,
            deta_50: at.deta,
            assa_50: at.assa,
            track_map_50,
            parts: Some(Parts {
                clear,
                idf1: id,
                hota: h,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub sequences: Vec<SequenceReport>,
    pub aggregate: MetricsReport,
}

/// All metrics of one sequence. Ground-truth and predicted trajectories
/// should carry class scores for track mAP; without them everything is
/// class 0.
pub fn evaluate_sequence(gt: &[Trajectory], pred: &[Trajectory]) -> Result<MetricsReport> {
    let clear = clear_mot(gt, pred, MATCH_IOU)?;
    let id = idf1(gt, pred, MATCH_IOU)?;
    let h = hota(gt, pred, &hota_thresholds())?;
    let map = track_map(&[(gt.to_vec(), pred.to_vec())], MATCH_IOU)?;
    Ok(MetricsReport::from_parts(clear, id, h, map))
}

/// Per-sequence reports plus the pooled aggregate: CLEAR and identity
/// counts are summed, HOTA is combined per threshold and track mAP ranks
/// all sequences together.
pub fn evaluate(sequences: &[(String, Vec<Trajectory>, Vec<Trajectory>)]) -> Result<EvaluationSummary> {
    let mut reports = Vec::with_capacity(sequences.len());
    for (name, gt, pred) in sequences {
        reports.push(SequenceReport {
            name: name.clone(),
            metrics: evaluate_sequence(gt, pred)?,
        });
    }
    let parts: Vec<&Parts> = reports
        .iter()
        .map(|r| r.metrics.parts.as_ref().expect("fresh report"))
        .collect();
    let sum = |f: fn(&Parts) -> usize| parts.iter().map(|p| f(p)).sum::<usize>();
    let clear = ClearMot::from_counts(
        sum(|p| p.clear.false_positives),
        sum(|p| p.clear.false_negatives),
        sum(|p| p.clear.id_switches),
        sum(|p| p.clear.matches),
        sum(|p| p.clear.num_gt),
    )?;
    let id = Idf1::from_counts(sum(|p| p.idf1.idtp), sum(|p| p.idf1.idfp), sum(|p| p.idf1.idfn))?;
    let h = Hota::combine(&parts.iter().map(|p| p.hota.clone()).collect::<Vec<_>>())?;
    let pooled: Vec<(Vec<Trajectory>, Vec<Trajectory>)> =
        sequences.iter().map(|(_, g, p)| (g.clone(), p.clone())).collect();
    let map = track_map(&pooled, MATCH_IOU)?;
    Ok(EvaluationSummary {
        sequences: reports,
        aggregate: MetricsReport::from_parts(clear, id, h, map),
    })
}

impl EvaluationSummary {
    /// Fixed-width text table, one row per sequence plus the aggregate.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6} {:>5} {:>7}",
            "sequence", "MOTA", "IDF1", "HOTA", "DetA", "AssA", "FP", "FN", "IDSW", "mAP@.5"
        );
        let row = |s: &mut String, name: &str, m: &MetricsReport| {
            let _ = writeln!(
                s,
                "{:<16} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6} {:>6} {:>5} {:>7.2}",
                name,
                100.0 * m.mota,
                100.0 * m.idf1,
                100.0 * m.hota,
                100.0 * m.deta,
                100.0 * m.assa,
                m.false_positives,
                m.false_negatives,
                m.id_switches,
                100.0 * m.track_map_50
            );
        };
        for r in &self.sequences {
            row(&mut s, &r.name, &r.metrics);
        }
        row(&mut s, "COMBINED", &self.aggregate);
        s
    }
}
