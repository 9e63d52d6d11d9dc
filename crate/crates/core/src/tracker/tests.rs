use std::collections::HashMap;

use super::*;
use crate::error::Result;
use crate::geometry::BBox;
use crate::head::{association_distribution, AssociationDistribution, AssociationScores};
use crate::metrics::{clear_mot, idf1};
use crate::sim::{
    generate_scenario, render_detections, Detection, DetectionClip, NoiseConfig, OcclusionConfig, RandomOcclusion,
    ScenarioConfig,
};
use crate::train::assign_gt;

fn det(frame: u32, x: f64) -> Detection {
    Detection {
        frame,
        bbox: BBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
        confidence: 0.9,
        feature: vec![x],
        class_scores: None,
    }
}

fn clip(frames: Vec<Vec<f64>>) -> DetectionClip {
    DetectionClip {
        feature_dim: 1,
        frames: frames
            .into_iter()
            .enumerate()
            .map(|(i, xs)| xs.into_iter().map(|x| det(i as u32 + 1, x)).collect())
            .collect(),
    }
}

fn logit(p: f64, p_empty: f64) -> f64 {
    (p / p_empty).ln()
}

/// Replays fixed logits, keyed by the frame of the window's last entry.
/// Frames without an entry score every pair at -50.
struct TableScorer(HashMap<u32, Vec<f64>>);

impl AssociationScorer for TableScorer {
    fn distribution(&self, window: &[WindowFrame]) -> Result<AssociationDistribution> {
        let part = window_partition(window);
        let last = window.last().unwrap();
        let rows = last.detections.len();
        let data = self
            .0
            .get(&last.frame)
            .cloned()
            .unwrap_or_else(|| vec![-50.0; rows * part.total()]);
        Ok(association_distribution(&AssociationScores::new(rows, part, data)?))
    }
}

fn open_cfg(window: usize) -> InferenceConfig {
    InferenceConfig {
        window,
        score_threshold: 0.0,
        min_track_length: 1,
        ..InferenceConfig::default()
    }
}

#[test]
fn first_frame_spawns_every_detection() {
    let c = clip(vec![vec![0.0, 50.0, 100.0]]);
    let out = track_sequence(&c, &TableScorer(HashMap::new()), &open_cfg(4)).unwrap();
    assert_eq!(out.tracks.iter().map(|t| t.id).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(out.trace[0].links.iter().all(|l| l.score.is_none()));
}

#[test]
fn empty_sequence_is_empty() {
    let c = DetectionClip {
        feature_dim: 1,
        frames: vec![],
    };
    let out = track_sequence(&c, &TableScorer(HashMap::new()), &open_cfg(4)).unwrap();
    assert!(out.tracks.is_empty());
    let c = clip(vec![vec![], vec![]]);
    assert!(track_sequence(&c, &TableScorer(HashMap::new()), &open_cfg(4)).unwrap().tracks.is_empty());
}

#[test]
fn below_threshold_starts_new_track() {
    // Window [f1: 1 det, f2: 1 det]; the query gives the track's detection 0.1.
    let p_empty = 0.9;
    let scorer = TableScorer(HashMap::from([(2, vec![logit(0.1, p_empty), 0.0])]));
    let c = clip(vec![vec![0.0], vec![0.0]]);
    let out = track_sequence(&c, &scorer, &open_cfg(4)).unwrap();
    assert_eq!(out.tracks.len(), 2);
    assert!((out.trace[1].scores[0][0] - 0.1).abs() < 1e-12);
    assert_eq!(out.trace[1].links[0].score, None);

    let scorer = TableScorer(HashMap::from([(2, vec![logit(0.3, 0.7), 0.0])]));
    let out = track_sequence(&c, &scorer, &open_cfg(4)).unwrap();
    assert_eq!(out.tracks.len(), 1);
}

#[test]
fn hungarian_maximizes_total_link_score() {
    // Track 1 lives only in frame 1, track 2 only in frame 2, so the two
    // rows of link scores are set independently through frames 1 and 2.
    let mut table = HashMap::new();
    table.insert(2, vec![-50.0, 0.0]);
    let (a0, b0) = (logit(0.9, 0.1), logit(0.7, 0.3));
    let (a1, b1) = (logit(0.8, 0.2), logit(0.95, 0.05));
    table.insert(3, vec![a0, b0, 0.0, 0.0, a1, b1, 0.0, 0.0]);
    let c = clip(vec![vec![0.0], vec![200.0], vec![10.0, 210.0]]);
    let out = track_sequence(&c, &TableScorer(table), &open_cfg(4)).unwrap();
    let t = &out.trace[2];
    assert_eq!(t.candidates, vec![1, 2]);
    let expect = [[0.9, 0.8], [0.7, 0.95]];
    for (r, row) in expect.iter().enumerate() {
        for (q, e) in row.iter().enumerate() {
            assert!((t.scores[r][q] - e).abs() < 1e-12);
        }
    }
    assert_eq!(t.links[0].track, 1);
    assert_eq!(t.links[1].track, 2);
    assert_eq!(out.tracks.len(), 2);
}

#[test]
fn theta_extremes() {
    let c = clip(vec![vec![0.0, 50.0], vec![0.0, 50.0], vec![0.0, 50.0]]);
    let mut cfg = open_cfg(4);
    cfg.new_track_threshold = 1.0 + 1e-9;
    let scorer = TableScorer(HashMap::new());
    let out = track_sequence(&c, &scorer, &cfg).unwrap();
    assert_eq!(out.tracks.len(), 6);
    cfg.new_track_threshold = 0.0;
    let out = track_sequence(&c, &scorer, &cfg).unwrap();
    assert_eq!(out.tracks.len(), 2);
}

#[test]
fn score_threshold_filters_detections() {
    let mut c = clip(vec![vec![0.0, 50.0]]);
    c.frames[0][1].confidence = 0.3;
    let cfg = InferenceConfig {
        score_threshold: 0.55,
        ..open_cfg(4)
    };
    let out = track_sequence(&c, &TableScorer(HashMap::new()), &cfg).unwrap();
    assert_eq!(out.tracks.len(), 1);
    assert_eq!(out.tracks[0].slices[&1].source, 0);
}

#[test]
fn location_fusion_takes_the_max() {
    // The association score is tiny but the box barely moved.
    let scorer = TableScorer(HashMap::from([(2, vec![-50.0, 0.0])]));
    let c = clip(vec![vec![0.0], vec![1.0]]);
    let mut cfg = open_cfg(4);
    assert_eq!(track_sequence(&c, &scorer, &cfg).unwrap().tracks.len(), 2);
    cfg.use_location = true;
    let out = track_sequence(&c, &scorer, &cfg).unwrap();
    assert_eq!(out.tracks.len(), 1);
    let iou = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap().iou(&BBox::new(1.0, 0.0, 11.0, 10.0).unwrap());
    assert!((out.trace[1].scores[0][0] - iou).abs() < 1e-12);
}

fn oracle_scenario(seed: u64, gap: [u32; 2]) -> ScenarioConfig {
    ScenarioConfig {
        num_objects: 4,
        clip_length: 40,
        occlusion: OcclusionConfig {
            random: Some(RandomOcclusion {
                probability: 0.8,
                max_episodes: 2,
                gap,
            }),
            ..OcclusionConfig::default()
        },
        noise: NoiseConfig {
            box_jitter: 0.01,
            ..NoiseConfig::noiseless()
        },
        seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn oracle_scores_recover_ground_truth() {
    for seed in 0..4 {
        let cfg = oracle_scenario(seed, [1, 6]);
        let gt = generate_scenario(&cfg).unwrap();
        let dets = render_detections(&gt, &cfg).unwrap();
        let oracle = OracleScorer::from_assignment(&assign_gt(&dets, &gt).unwrap());
        let icfg = open_cfg(8);
        let out = track_sequence(&dets, &oracle, &icfg).unwrap();
        let pred = to_trajectories(&postprocess(out.tracks, &icfg)).unwrap();
        let m = clear_mot(&gt.trajectories, &pred, 0.5).unwrap();
        assert_eq!(m.mota, 1.0, "seed {seed}: {m:?}");
        assert_eq!(idf1(&gt.trajectories, &pred, 0.5).unwrap().idf1, 1.0);
    }
}

#[test]
fn window_of_two_cannot_bridge_a_two_frame_gap() {
    let c = clip(vec![vec![0.0], vec![], vec![], vec![0.0]]);
    let labels = HashMap::from([((1, 0), 7), ((4, 0), 7)]);
    let oracle = OracleScorer::new(labels);
    let out = track_sequence(&c, &oracle, &open_cfg(2)).unwrap();
    assert_eq!(out.tracks.len(), 2);
    let out = track_sequence(&c, &oracle, &open_cfg(4)).unwrap();
    assert_eq!(out.tracks.len(), 1);
}

#[test]
fn prefix_runs_agree() {
    let cfg = oracle_scenario(9, [2, 5]);
    let gt = generate_scenario(&cfg).unwrap();
    let dets = render_detections(&gt, &cfg).unwrap();
    let oracle = OracleScorer::from_assignment(&assign_gt(&dets, &gt).unwrap());
    let icfg = open_cfg(4);
    let full = track_sequence(&dets, &oracle, &icfg).unwrap();
    let prefix = track_sequence(&dets.sub_clip(1, 25).unwrap(), &oracle, &icfg).unwrap();
    assert_eq!(full.trace[..25], prefix.trace[..]);
    for t in &prefix.tracks {
        let f = full.tracks.iter().find(|x| x.id == t.id).unwrap();
        let head: Vec<_> = f.slices.range(..=25).map(|(k, v)| (*k, v.clone())).collect();
        let mine: Vec<_> = t.slices.iter().map(|(k, v)| (*k, v.clone())).collect();
        assert_eq!(head, mine);
    }
}

#[test]
fn no_detection_shared_within_a_frame() {
    let cfg = oracle_scenario(3, [1, 4]);
    let gt = generate_scenario(&cfg).unwrap();
    let dets = render_detections(&gt, &cfg).unwrap();
    let oracle = OracleScorer::from_assignment(&assign_gt(&dets, &gt).unwrap());
    let out = track_sequence(&dets, &oracle, &open_cfg(3)).unwrap();
    let mut seen = std::collections::HashSet::new();
    for t in &out.tracks {
        for (f, s) in &t.slices {
            assert!(seen.insert((*f, s.source)));
        }
    }
    let mut ids: Vec<u64> = out.tracks.iter().map(|t| t.id).collect();
    ids.dedup();
    assert_eq!(ids.len(), out.tracks.len());
}

fn track_with_scores(id: u64, scores: &[Vec<f64>]) -> Track {
    let slices = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut d = det(i as u32 + 1, 0.0);
            d.class_scores = Some(s.clone());
            (
                i as u32 + 1,
                TrackSlice {
                    bbox: d.bbox,
                    confidence: d.confidence,
                    class_scores: d.class_scores,
                    detection: 0,
                    source: 0,
                },
            )
        })
        .collect();
    Track { id, slices }
}

#[test]
fn postprocess_length_filter() {
    let four = track_with_scores(1, &vec![vec![1.0]; 4]);
    let five = track_with_scores(2, &vec![vec![1.0]; 5]);
    let cfg = InferenceConfig::default();
    let kept = postprocess(vec![four.clone(), five.clone()], &cfg);
    assert_eq!(kept.iter().map(|t| t.id).collect::<Vec<_>>(), vec![2]);
    assert!(postprocess(vec![four.clone()], &cfg).is_empty());
    let all = postprocess(vec![four.clone(), five.clone()], &open_cfg(1));
    assert_eq!(all, vec![four, five]);
}

#[test]
fn class_scores_averaged_over_track() {
    let single = track_with_scores(1, &[vec![0.2, 0.8]]);
    let pair = track_with_scores(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let three = track_with_scores(3, &[vec![0.6, 0.3, 0.1], vec![0.3, 0.3, 0.4], vec![0.0, 0.9, 0.1]]);
    let out = average_class_scores(vec![single, pair, three]);
    assert_eq!(out[0].slices[&1].class_scores, Some(vec![0.2, 0.8]));
    for s in out[1].slices.values() {
        assert_eq!(s.class_scores, Some(vec![0.5, 0.5]));
    }
    let mean = out[2].slices[&2].class_scores.clone().unwrap();
    for (m, e) in mean.iter().zip([0.3, 0.5, 0.2]) {
        assert!((m - e).abs() < 1e-15);
    }

    let mut missing = track_with_scores(4, &[vec![1.0], vec![0.0]]);
    missing.slices.get_mut(&2).unwrap().class_scores = None;
    let out = average_class_scores(vec![missing.clone()]);
    assert_eq!(out[0], missing);
}

#[test]
fn single_frame_window_yields_one_slice_per_query() {
    let c = clip(vec![vec![0.0, 30.0]]);
    let window = vec![WindowFrame {
        frame: 1,
        detections: c.frames[0].clone(),
        source: vec![0, 1],
    }];
    let assoc = window_associate(&window, &OracleScorer::new(HashMap::from([((1, 0), 1), ((1, 1), 2)]))).unwrap();
    assert_eq!(assoc.trajectories, vec![vec![Some(0)], vec![Some(1)]]);
    let empty = vec![WindowFrame {
        frame: 1,
        detections: vec![],
        source: vec![],
    }];
    assert!(window_associate(&empty, &OracleScorer::default()).unwrap().trajectories.is_empty());
}
