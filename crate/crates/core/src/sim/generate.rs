use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::clip::{Detection, DetectionClip, GroundTruthClip};
use super::config::{OcclusionEpisode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{interpolate_box, BBox, Trajectory};

const SCENARIO_STREAM: u64 = 0;
const RENDER_STREAM: u64 = 1;
const PROJECTION_STREAM: u64 = 2;
const FREQUENCIES: [f64; 3] = [1.0, 2.0, 4.0];
const GEOMETRY_DIM: usize = 4 * FREQUENCIES.len() + 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Trajectories with piecewise-linear motion that reflects off the arena
/// walls. Occlusion episodes remove slices.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<GroundTruthClip> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, SCENARIO_STREAM);
    let [w_arena, h_arena] = cfg.arena;
    let t_max = cfg.clip_length;

    let mut trajectories = Vec::with_capacity(cfg.num_objects);
    let mut classes = Vec::with_capacity(cfg.num_objects);
    let mut appearances = Vec::with_capacity(cfg.num_objects);
    let mut episodes: Vec<Vec<OcclusionEpisode>> = vec![Vec::new(); cfg.num_objects];

    for k in 0..cfg.num_objects {
        let w = uniform(&mut rng, cfg.motion.size);
        let h = w * uniform(&mut rng, cfg.motion.aspect);
        let (lo_x, hi_x) = (w / 2.0, w_arena - w / 2.0);
        let (lo_y, hi_y) = (h / 2.0, h_arena - h / 2.0);
        let mut x = rng.random_range(lo_x..hi_x);
        let mut y = rng.random_range(lo_y..hi_y);
        let speed = uniform(&mut rng, cfg.motion.speed);
        let mut heading = rng.random_range(0.0..2.0 * PI);
        let class = rng.random_range(0..cfg.num_classes);
        let appearance: Vec<f64> = (0..cfg.appearance_dim).map(|_| normal(&mut rng)).collect();

        let mut slices = BTreeMap::new();
        for t in 1..=t_max {
            if t > 1 {
                if rng.random::<f64>() < cfg.motion.direction_change_prob {
                    heading += rng.random_range(-PI / 2.0..PI / 2.0);
                }
                x += speed * heading.cos();
                y += speed * heading.sin();
                if x < lo_x || x > hi_x {
                    x = reflect(x, lo_x, hi_x);
                    heading = PI - heading;
                }
                if y < lo_y || y > hi_y {
                    y = reflect(y, lo_y, hi_y);
                    heading = -heading;
                }
            }
            slices.insert(t, BBox::from_center(x, y, w, h)?);
        }

        if let Some(r) = &cfg.occlusion.random {
            for _ in 0..r.max_episodes {
                if rng.random::<f64>() >= r.probability {
                    continue;
                }
                let duration = rng.random_range(r.gap[0]..=r.gap[1]);
                if t_max < duration + 2 {
                    continue;
                }
                let start = rng.random_range(2..=t_max - duration);
                let clear = episodes[k]
                    .iter()
                    .all(|e| start + duration < e.start || e.start + e.duration < start);
                if clear {
                    episodes[k].push(OcclusionEpisode {
                        object: k,
                        start,
                        duration,
                    });
                }
            }
        }
        trajectories.push(slices);
        classes.push(class);
        appearances.push(appearance);
    }

    for ep in &cfg.occlusion.episodes {
        episodes[ep.object].push(*ep);
    }

    let trajectories = trajectories
        .into_iter()
        .enumerate()
        .map(|(k, mut slices)| {
            for ep in &episodes[k] {
                for t in ep.start..ep.start + ep.duration {
                    slices.remove(&t);
                }
            }
            Trajectory::new(k as u64, slices)
                .map_err(|_| Error::Config(format!("occlusions hide object {k} for the whole clip")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GroundTruthClip {
        num_frames: t_max,
        trajectories,
        classes,
        appearances,
    })
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let mut u = (v - lo).rem_euclid(2.0 * span);
    if u > span {
        u = 2.0 * span - u;
    }
    lo + u
}

/// Fixed random map from `appearance ⊕ geometry` to the feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEmbedder {
    pub arena: [f64; 2],
    pub geometry_weight: f64,
    pub appearance_dim: usize,
    /// Row-major `feature_dim × (appearance_dim + geometry dim)`.
    projection: Vec<f64>,
    feature_dim: usize,
}

impl FeatureEmbedder {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let input = cfg.appearance_dim + GEOMETRY_DIM;
        let mut rng = rng_for(cfg.projection_seed, PROJECTION_STREAM);
        let std = 1.0 / (input as f64).sqrt();
        let projection = (0..cfg.feature_dim * input).map(|_| std * normal(&mut rng)).collect();
        Self {
            arena: cfg.arena,
            geometry_weight: cfg.geometry_weight,
            appearance_dim: cfg.appearance_dim,
            projection,
            feature_dim: cfg.feature_dim,
        }
    }

    /// Sinusoidal encoding of the box centre at a few spatial frequencies,
    /// plus log width and height relative to the arena.
    pub fn geometry(&self, b: &BBox) -> Vec<f64> {
        let (cx, cy) = b.center();
        let mut out = Vec::with_capacity(GEOMETRY_DIM);
        for f in FREQUENCIES {
            let ax = 2.0 * PI * f * cx / self.arena[0];
            let ay = 2.0 * PI * f * cy / self.arena[1];
            out.extend([ax.sin(), ax.cos(), ay.sin(), ay.cos()]);
        }
        out.push((b.width() / self.arena[0] * 10.0).ln());
        out.push((b.height() / self.arena[1] * 10.0).ln());
        out
    }

    pub fn embed(&self, appearance: &[f64], b: &BBox) -> Vec<f64> {
        let mut x = appearance.to_vec();
        x.extend(self.geometry(b).into_iter().map(|g| g * self.geometry_weight));
        let input = x.len();
        (0..self.feature_dim)
            .map(|r| {
                self.projection[r * input..(r + 1) * input]
                    .iter()
                    .zip(&x)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect()
    }
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, sigma: f64) -> Result<BBox> {
    if sigma == 0.0 {
        return Ok(*b);
    }
    let (w, h) = (b.width(), b.height());
    let x1 = b.x1() + sigma * w * normal(rng);
    let y1 = b.y1() + sigma * h * normal(rng);
    let x2 = (b.x2() + sigma * w * normal(rng)).max(x1 + 1.0);
    let y2 = (b.y2() + sigma * h * normal(rng)).max(y1 + 1.0);
    BBox::new(x1, y1, x2, y2)
}

fn class_scores(rng: &mut ChaCha8Rng, class: usize, num_classes: usize, noise: f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..num_classes)
        .map(|c| if c == class { 2.0 } else { 0.0 } + noise * normal(rng))
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Noisy detections of every visible ground-truth slice plus false
/// positives, each frame shuffled.
pub fn render_detections(gt: &GroundTruthClip, cfg: &ScenarioConfig) -> Result<DetectionClip> {
    cfg.validate()?;
    gt.validate()?;
    let mut rng = rng_for(cfg.seed, RENDER_STREAM);
    let embedder = FeatureEmbedder::new(cfg);
    let noise = &cfg.noise;
    let fp_dist = if noise.false_positive_rate > 0.0 {
        Some(Poisson::new(noise.false_positive_rate).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let feat_noise = Normal::new(0.0, noise.feature_noise).map_err(|e| Error::Config(e.to_string()))?;

    let mut frames = Vec::with_capacity(gt.num_frames as usize);
    for t in 1..=gt.num_frames {
        let mut dets = Vec::new();
        let mut gt_boxes = Vec::new();
        for (k, traj) in gt.trajectories.iter().enumerate() {
            let Some(b) = traj.get(t) else { continue };
            gt_boxes.push(*b);
            if rng.random::<f64>() < noise.dropout {
                continue;
            }
            let bbox = jitter(&mut rng, b, noise.box_jitter)?;
            let appearance: Vec<f64> = gt.appearances[k]
                .iter()
                .map(|a| a + feat_noise.sample(&mut rng))
                .collect();
            let confidence = (1.0 - (noise.confidence_noise * normal(&mut rng)).abs()).clamp(0.01, 1.0);
            let scores = class_scores(&mut rng, gt.classes[k], cfg.num_classes, noise.class_noise);
            dets.push(Detection {
                frame: t,
                bbox,
                confidence,
                feature: embedder.embed(&appearance, &bbox),
                class_scores: Some(scores),
            });
        }

        let n_fp = fp_dist.map_or(0, |d| d.sample(&mut rng) as usize);
        for _ in 0..n_fp {
            if let Some(bbox) = sample_false_positive(&mut rng, cfg, &gt_boxes)? {
                let appearance: Vec<f64> = (0..cfg.appearance_dim).map(|_| normal(&mut rng)).collect();
                let confidence = uniform(&mut rng, noise.false_positive_confidence);
                let class = rng.random_range(0..cfg.num_classes);
                let scores = class_scores(&mut rng, class, cfg.num_classes, noise.class_noise);
                dets.push(Detection {
                    frame: t,
                    bbox,
                    confidence,
                    feature: embedder.embed(&appearance, &bbox),
                    class_scores: Some(scores),
                });
            }
        }
        dets.shuffle(&mut rng);
        frames.push(dets);
    }
    Ok(DetectionClip {
        feature_dim: cfg.feature_dim,
        frames,
    })
}

/// Random box with IoU < 0.5 against every ground-truth box of the frame;
/// `None` after 100 rejected draws.
fn sample_false_positive(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, gt: &[BBox]) -> Result<Option<BBox>> {
    for _ in 0..100 {
        let w = uniform(rng, cfg.motion.size);
        let h = w * uniform(rng, cfg.motion.aspect);
        let x = rng.random_range(w / 2.0..cfg.arena[0] - w / 2.0);
        let y = rng.random_range(h / 2.0..cfg.arena[1] - h / 2.0);
        let b = BBox::from_center(x, y, w, h)?;
        if gt.iter().all(|g| g.iou(&b) < 0.5) {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

/// Scale and translation ranges of the image-level augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub scale: [f64; 2],
    pub translate: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale: [0.8, 1.2],
            translate: [-20.0, 20.0],
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            scale: [1.0, 1.0],
            translate: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Augment {
    scale: f64,
    dx: f64,
    dy: f64,
}

impl Augment {
    fn sample(rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Self {
        Self {
            scale: uniform(rng, cfg.scale),
            dx: uniform(rng, cfg.translate),
            dy: uniform(rng, cfg.translate),
        }
    }

    fn apply(&self, b: &BBox) -> Result<BBox> {
        let s = self.scale;
        BBox::new(
            b.x1() * s + self.dx,
            b.y1() * s + self.dy,
            b.x2() * s + self.dx,
            b.y2() * s + self.dy,
        )
    }
}

/// A `num_frames`-frame clip from a single annotated frame: two independent
/// augmentations give the first and last frame, boxes in between are linear
/// blends.
pub fn static_scene_clip(
    gt_frame: &GroundTruthClip,
    num_frames: u32,
    aug: &AugmentConfig,
    seed: u64,
) -> Result<GroundTruthClip> {
    if num_frames < 2 {
        return Err(Error::Config("static clips need at least 2 frames".into()));
    }
    if gt_frame.num_frames != 1 {
        return Err(Error::Contract(format!(
            "expected a single-frame clip, got {} frames",
            gt_frame.num_frames
        )));
    }
    if aug.scale[0] <= 0.0 || aug.scale[0] > aug.scale[1] || aug.translate[0] > aug.translate[1] {
        return Err(Error::Config(format!("invalid augmentation ranges {aug:?}")));
    }
    gt_frame.validate()?;
    let mut rng = rng_for(seed, SCENARIO_STREAM);
    let start = Augment::sample(&mut rng, aug);
    let end = Augment::sample(&mut rng, aug);

    let trajectories = gt_frame
        .trajectories
        .iter()
        .map(|traj| {
            let b = traj.get(1).expect("validated single-frame slice");
            let (b0, b1) = (start.apply(b)?, end.apply(b)?);
            let slices = (1..=num_frames)
                .map(|t| {
                    let alpha = (t - 1) as f64 / (num_frames - 1) as f64;
                    Ok((t, interpolate_box(&b0, &b1, alpha)?))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            Trajectory::new(traj.id, slices)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruthClip {
        num_frames,
        trajectories,
        classes: gt_frame.classes.clone(),
        appearances: gt_frame.appearances.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{NoiseConfig, RandomOcclusion};

    fn small(k: usize, t: u32) -> ScenarioConfig {
        ScenarioConfig {
            num_objects: k,
            clip_length: t,
            seed: 3,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn full_visibility_without_occlusion() {
        let gt = generate_scenario(&small(2, 4)).unwrap();
        assert_eq!(gt.trajectories.len(), 2);
        for t in &gt.trajectories {
            assert_eq!(t.slices.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn explicit_episode_removes_frames() {
        let mut cfg = small(2, 5);
        cfg.occlusion.episodes.push(OcclusionEpisode {
            object: 0,
            start: 2,
            duration: 2,
        });
        let gt = generate_scenario(&cfg).unwrap();
        assert_eq!(gt.trajectories[0].slices.keys().copied().collect::<Vec<_>>(), vec![1, 4, 5]);
        assert_eq!(gt.trajectories[1].len(), 5);
    }

    #[test]
    fn same_seed_same_clip() {
        let mut cfg = small(5, 30);
        cfg.noise.false_positive_rate = 1.0;
        cfg.noise.dropout = 0.1;
        cfg.occlusion.random = Some(RandomOcclusion {
            probability: 0.8,
            max_episodes: 2,
            gap: [3, 6],
        });
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        let da = render_detections(&a, &cfg).unwrap();
        let db = render_detections(&b, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&da).unwrap(), serde_json::to_string(&db).unwrap());
        cfg.seed += 1;
        assert_ne!(generate_scenario(&cfg).unwrap(), a);
    }

    #[test]
    fn boxes_stay_in_arena() {
        let mut cfg = small(6, 200);
        cfg.motion.speed = [10.0, 20.0];
        cfg.motion.direction_change_prob = 0.2;
        let gt = generate_scenario(&cfg).unwrap();
        for t in &gt.trajectories {
            for b in t.slices.values() {
                assert!(b.x1() >= -1e-9 && b.y1() >= -1e-9);
                assert!(b.x2() <= cfg.arena[0] + 1e-9 && b.y2() <= cfg.arena[1] + 1e-9);
            }
        }
    }

    #[test]
    fn random_occlusions_respect_gap_range() {
        let mut cfg = small(8, 40);
        cfg.occlusion.random = Some(RandomOcclusion {
            probability: 1.0,
            max_episodes: 3,
            gap: [3, 5],
        });
        let gt = generate_scenario(&cfg).unwrap();
        let mut seen_gap = false;
        for t in &gt.trajectories {
            assert!(t.get(1).is_some() && t.get(40).is_some());
            let frames: Vec<u32> = t.slices.keys().copied().collect();
            for w in frames.windows(2) {
                let gap = w[1] - w[0] - 1;
                if gap > 0 {
                    seen_gap = true;
                    assert!((3..=5).contains(&gap), "gap {gap}");
                }
            }
        }
        assert!(seen_gap);
    }

    #[test]
    fn noiseless_detections_reproduce_ground_truth() {
        let mut cfg = small(4, 6);
        cfg.noise = NoiseConfig::noiseless();
        cfg.occlusion.episodes.push(OcclusionEpisode {
            object: 1,
            start: 3,
            duration: 2,
        });
        let gt = generate_scenario(&cfg).unwrap();
        let dets = render_detections(&gt, &cfg).unwrap();
        dets.validate().unwrap();
        assert_eq!(dets.num_detections(), gt.num_boxes());
        for t in 1..=gt.num_frames {
            for d in dets.frame(t) {
                let best = gt
                    .trajectories
                    .iter()
                    .filter_map(|tr| tr.get(t))
                    .map(|b| b.iou(&d.bbox))
                    .fold(0.0, f64::max);
                assert_eq!(best, 1.0);
            }
        }
    }

    #[test]
    fn full_dropout_is_empty() {
        let mut cfg = small(3, 5);
        cfg.noise.dropout = 1.0;
        let gt = generate_scenario(&cfg).unwrap();
        let dets = render_detections(&gt, &cfg).unwrap();
        assert_eq!(dets.num_frames(), 5);
        assert_eq!(dets.num_detections(), 0);
    }

    #[test]
    fn dropout_golden_count() {
        let mut cfg = small(2, 4);
        cfg.seed = 11;
        cfg.noise.dropout = 0.25;
        let gt = generate_scenario(&cfg).unwrap();
        let dets = render_detections(&gt, &cfg).unwrap();
        assert_eq!(dets.num_detections(), 7);
    }

    #[test]
    fn false_positives_stay_below_half_iou() {
        for seed in 0..20 {
            let mut cfg = small(4, 5);
            cfg.seed = seed;
            cfg.noise = NoiseConfig::noiseless();
            cfg.noise.false_positive_rate = 2.0;
            let gt = generate_scenario(&cfg).unwrap();
            let dets = render_detections(&gt, &cfg).unwrap();
            for t in 1..=gt.num_frames {
                for d in dets.frame(t) {
                    let ious: Vec<f64> =
                        gt.trajectories.iter().filter_map(|tr| tr.get(t)).map(|b| b.iou(&d.bbox)).collect();
                    let exact = ious.iter().any(|&v| v == 1.0);
                    assert!(exact || ious.iter().all(|&v| v < 0.5));
                }
            }
        }
    }

    fn one_frame() -> GroundTruthClip {
        let traj = Trajectory::new(0, BTreeMap::from([(1, BBox::new(10.0, 10.0, 30.0, 50.0).unwrap())])).unwrap();
        GroundTruthClip {
            num_frames: 1,
            trajectories: vec![traj],
            classes: vec![0],
            appearances: vec![vec![0.0]],
        }
    }

    #[test]
    fn static_clip_identity_augmentation() {
        let src = one_frame();
        let clip = static_scene_clip(&src, 6, &AugmentConfig::identity(), 1).unwrap();
        assert_eq!(clip.num_frames, 6);
        for t in 1..=6 {
            assert_eq!(clip.trajectories[0].get(t), src.trajectories[0].get(1));
        }
    }

    #[test]
    fn static_clip_translation_is_linear() {
        let aug = AugmentConfig {
            scale: [1.0, 1.0],
            translate: [-30.0, 30.0],
        };
        let clip = static_scene_clip(&one_frame(), 5, &aug, 9).unwrap();
        let tr = &clip.trajectories[0];
        let (b0, b4) = (tr.get(1).unwrap(), tr.get(5).unwrap());
        let (dx, dy) = (b4.x1() - b0.x1(), b4.y1() - b0.y1());
        assert!(dx.abs() > 1e-6);
        for t in 1..=5u32 {
            let f = (t - 1) as f64 / 4.0;
            let b = tr.get(t).unwrap();
            assert!((b.x1() - (b0.x1() + f * dx)).abs() < 1e-12);
            assert!((b.y2() - (b0.y2() + f * dy)).abs() < 1e-12);
            assert!((b.width() - b0.width()).abs() < 1e-12);
        }
    }

    #[test]
    fn static_clip_two_frames_are_endpoints() {
        let aug = AugmentConfig::default();
        let a = static_scene_clip(&one_frame(), 2, &aug, 4).unwrap();
        let b = static_scene_clip(&one_frame(), 9, &aug, 4).unwrap();
        assert_eq!(a.trajectories[0].get(1), b.trajectories[0].get(1));
        assert_eq!(a.trajectories[0].get(2), b.trajectories[0].get(9));
        assert!(static_scene_clip(&one_frame(), 1, &aug, 4).is_err());
    }
}
