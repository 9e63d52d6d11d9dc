//! Tracking metrics: CLEAR-MOT, IDF1, HOTA (DetA/AssA) and track mAP over
//! 3D trajectory IoU.

mod clear;
mod frames;
mod hota;
mod idf1;
mod report;
mod track_map;

pub use clear::{clear_mot, ClearMot};
pub use hota::{hota, hota_alpha, hota_thresholds, Hota, HotaAlpha};
pub use idf1::{idf1, Idf1};
pub use report::{evaluate, evaluate_sequence, EvaluationSummary, MetricsReport, SequenceReport, MATCH_IOU};
pub use track_map::{average_precision_101, track_map};

#[cfg(test)]
mod tests;
