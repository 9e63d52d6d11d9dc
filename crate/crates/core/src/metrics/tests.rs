use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{BBox, Trajectory};

fn cell(x: f64) -> BBox {
    BBox::new(x, 0.0, x + 10.0, 10.0).unwrap()
}

fn traj(id: u64, frames: impl IntoIterator<Item = (u32, BBox)>) -> Trajectory {
    Trajectory::new(id, frames.into_iter().collect::<BTreeMap<_, _>>()).unwrap()
}

/// Ten objects over two frames; frame 2 has one id change, two misses and
/// one spurious box.
fn mota_instance() -> (Vec<Trajectory>, Vec<Trajectory>) {
    let gt: Vec<Trajectory> = (0..10)
        .map(|k| traj(k, [(1, cell(20.0 * k as f64)), (2, cell(20.0 * k as f64))]))
        .collect();
    let mut pred = Vec::new();
    pred.push(traj(100, [(1, cell(0.0))]));
    pred.push(traj(101, [(2, cell(0.0))]));
    for k in 1..10u64 {
        let b = cell(20.0 * k as f64);
        if k <= 2 {
            pred.push(traj(100 + 10 * k, [(1, b)]));
        } else {
            pred.push(traj(100 + 10 * k, [(1, b), (2, b)]));
        }
    }
    pred.push(traj(999, [(2, cell(500.0))]));
    (gt, pred)
}

fn split_instance() -> (Vec<Trajectory>, Vec<Trajectory>) {
    let gt = vec![traj(1, (1..=10).map(|f| (f, cell(f as f64))))];
    let pred = vec![
        traj(7, (1..=5).map(|f| (f, cell(f as f64)))),
        traj(8, (6..=10).map(|f| (f, cell(f as f64)))),
    ];
    (gt, pred)
}

#[test]
fn mota_hand_instance() {
    let (gt, pred) = mota_instance();
    let m = clear_mot(&gt, &pred, 0.5).unwrap();
    assert_eq!(m.num_gt, 20);
    assert_eq!((m.false_positives, m.false_negatives, m.id_switches), (1, 2, 1));
    assert_eq!(m.mota, 0.8);
}

#[test]
fn idf1_split_instance() {
    let (gt, pred) = split_instance();
    let m = idf1(&gt, &pred, 0.5).unwrap();
    assert_eq!((m.idtp, m.idfp, m.idfn), (5, 5, 5));
    assert_eq!(m.idf1, 0.5);
    let c = clear_mot(&gt, &pred, 0.5).unwrap();
    assert_eq!(c.id_switches, 1);
    assert_eq!(c.mota, 0.9);
}

#[test]
fn hota_split_instance() {
    // Every box is exact, so DetA is 1 at every threshold; each true
    // positive belongs to an id pair with Jaccard 5 / (10 + 5 - 5).
    let (gt, pred) = split_instance();
    let h = hota(&gt, &pred, &hota_thresholds()).unwrap();
    assert_eq!(h.per_alpha.len(), 19);
    for a in &h.per_alpha {
        assert_eq!(a.deta, 1.0);
        assert_eq!(a.assa, 0.5);
        assert_eq!(a.hota, 0.5f64.sqrt());
    }
    assert!((h.hota - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn hota_geometric_mean_arithmetic() {
    assert!((hota_alpha(0.64, 0.25) - 0.4).abs() < 1e-15);
}

#[test]
fn perfect_predictions_score_one() {
    let (gt, _) = mota_instance();
    let m = clear_mot(&gt, &gt, 0.5).unwrap();
    assert_eq!(m.mota, 1.0);
    assert_eq!((m.false_positives, m.false_negatives, m.id_switches), (0, 0, 0));
    assert_eq!(idf1(&gt, &gt, 0.5).unwrap().idf1, 1.0);
    let h = hota(&gt, &gt, &hota_thresholds()).unwrap();
    assert_eq!((h.hota, h.deta, h.assa), (1.0, 1.0, 1.0));
    assert_eq!(track_map(&[(gt.clone(), gt)], 0.5).unwrap(), 1.0);
}

#[test]
fn removing_one_match_costs_one_over_gt() {
    let (gt, _) = mota_instance();
    let mut pred = gt.clone();
    pred[3].slices.remove(&2);
    let m = clear_mot(&gt, &pred, 0.5).unwrap();
    assert_eq!(m.false_negatives, 1);
    assert!((m.mota - (1.0 - 1.0 / 20.0)).abs() < 1e-15);
}

#[test]
fn undefined_without_ground_truth() {
    let (_, pred) = split_instance();
    assert!(clear_mot(&[], &pred, 0.5).is_err());
    assert!(idf1(&[], &pred, 0.5).is_err());
    assert!(hota(&[], &pred, &hota_thresholds()).is_err());
    assert!(track_map(&[(vec![], pred)], 0.5).is_err());
}

#[test]
fn single_threshold_hota_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (gt, pred) = random_instance(&mut rng);
        if gt.is_empty() {
            continue;
        }
        let h = hota(&gt, &pred, &[0.5]).unwrap();
        assert!((h.hota * h.hota - h.deta * h.assa).abs() < 1e-9);
    }
}

#[test]
fn ap_of_one_miss_then_hit() {
    assert_eq!(average_precision_101(&[false, true], 1), 0.5);
    assert_eq!(average_precision_101(&[true], 1), 1.0);
    assert_eq!(average_precision_101(&[], 3), 0.0);
}

#[test]
fn track_map_per_class_mean() {
    let a = traj(1, [(1, cell(0.0)), (2, cell(0.0))]).with_class_scores(vec![1.0, 0.0]);
    let b = traj(2, [(1, cell(100.0)), (2, cell(100.0))]).with_class_scores(vec![0.0, 1.0]);
    // Class 1 prediction is misplaced, so only class 0 is found.
    let pa = a.clone();
    let pb = traj(3, [(1, cell(300.0))]).with_class_scores(vec![0.1, 0.9]);
    let map = track_map(&[(vec![a, b], vec![pa, pb])], 0.5).unwrap();
    assert_eq!(map, 0.5);
}

#[test]
fn evaluate_pools_sequences() {
    let (gt, pred) = split_instance();
    let (gt2, _) = mota_instance();
    let summary = evaluate(&[
        ("split".into(), gt, pred),
        ("perfect".into(), gt2.clone(), gt2),
    ])
    .unwrap();
    assert_eq!(summary.sequences.len(), 2);
    let agg = &summary.aggregate;
    assert_eq!(agg.num_gt, 30);
    assert_eq!(agg.id_switches, 1);
    assert!((agg.mota - (1.0 - 1.0 / 30.0)).abs() < 1e-15);
    // 10 true positives at AssA 0.5 and 20 at AssA 1.
    assert!((agg.assa - 25.0 / 30.0).abs() < 1e-12);
    assert!(summary.table().contains("COMBINED"));
    let json = serde_json::to_string(&summary).unwrap();
    let back: EvaluationSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back.aggregate.mota, agg.mota);
}

/// Boxes on a coarse grid so that overlaps are either large or zero.
fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let frames = rng.random_range(1..=6u32);
    let make = |n: usize, base: u64, rng: &mut ChaCha8Rng| -> Vec<Trajectory> {
        let mut out = Vec::new();
        for k in 0..n {
            let mut slices = BTreeMap::new();
            for f in 1..=frames {
                if rng.random_bool(0.8) {
                    let x = 12.0 * rng.random_range(0..4) as f64 + rng.random_range(0.0..2.0);
                    slices.insert(f, cell(x));
                }
            }
            if let Ok(t) = Trajectory::new(base + k as u64, slices) {
                out.push(t);
            }
        }
        out
    };
    let ng = rng.random_range(1..=4);
    let np = rng.random_range(0..=4);
    let gt = make(ng, 0, rng);
    let pred = make(np, 100, rng);
    (gt, pred)
}

fn overlap(g: &Trajectory, p: &Trajectory) -> usize {
    g.slices
        .iter()
        .filter(|(f, b)| p.get(**f).is_some_and(|q| b.iou(q) >= 0.5))
        .count()
}

fn brute_idtp(gt: &[Trajectory], pred: &[Trajectory], g: usize, used: &mut Vec<bool>) -> usize {
    if g == gt.len() {
        return 0;
    }
    let mut best = brute_idtp(gt, pred, g + 1, used);
    for p in 0..pred.len() {
        if !used[p] {
            used[p] = true;
            best = best.max(overlap(&gt[g], &pred[p]) + brute_idtp(gt, pred, g + 1, used));
            used[p] = false;
        }
    }
    best
}

#[test]
fn idf1_matches_brute_force_bijections() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    while checked < 50 {
        let (gt, pred) = random_instance(&mut rng);
        if gt.is_empty() {
            continue;
        }
        let m = idf1(&gt, &pred, 0.5).unwrap();
        let best = brute_idtp(&gt, &pred, 0, &mut vec![false; pred.len()]);
        assert_eq!(m.idtp, best);
        checked += 1;
    }
}

fn relabel(ts: &[Trajectory], offset: u64) -> Vec<Trajectory> {
    ts.iter()
        .rev()
        .map(|t| Trajectory {
            id: t.id * 3 + offset,
            ..t.clone()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_invariant_to_relabelling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, pred) = random_instance(&mut rng);
        prop_assume!(!gt.is_empty());
        let (gt2, pred2) = (relabel(&gt, 1000), relabel(&pred, 5000));
        let a = idf1(&gt, &pred, 0.5).unwrap();
        let b = idf1(&gt2, &pred2, 0.5).unwrap();
        prop_assert_eq!(a.idtp, b.idtp);
        let ha = hota(&gt, &pred, &hota_thresholds()).unwrap();
        let hb = hota(&gt2, &pred2, &hota_thresholds()).unwrap();
        prop_assert!((ha.hota - hb.hota).abs() < 1e-9);
        let ca = clear_mot(&gt, &pred, 0.5).unwrap();
        let cb = clear_mot(&gt2, &pred2, 0.5).unwrap();
        prop_assert_eq!(ca.matches, cb.matches);
    }

    #[test]
    fn rates_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, pred) = random_instance(&mut rng);
        prop_assume!(!gt.is_empty());
        let r = evaluate_sequence(&gt, &pred).unwrap();
        for v in [r.idf1, r.hota, r.deta, r.assa, r.track_map_50] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.mota <= 1.0);
    }

    #[test]
    fn assa_and_idf1_one_on_exact_recovery(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gt, _) = random_instance(&mut rng);
        prop_assume!(!gt.is_empty());
        let pred = relabel(&gt, 77);
        prop_assert_eq!(idf1(&gt, &pred, 0.5).unwrap().idf1, 1.0);
        prop_assert!((hota(&gt, &pred, &hota_thresholds()).unwrap().assa - 1.0).abs() < 1e-12);
    }
}
