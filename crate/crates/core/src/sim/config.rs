use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything that determines one synthetic clip. All randomness is drawn
/// from `seed`, except the feature projection, which comes from
/// `projection_seed` so that every clip shares one "detector".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_objects: usize,
    pub clip_length: u32,
    /// Arena width and height in scene units.
    pub arena: [f64; 2],
    pub motion: MotionConfig,
    pub occlusion: OcclusionConfig,
    pub appearance_dim: usize,
    pub feature_dim: usize,
    /// Multiplier on the box-geometry part of the feature before projection.
    pub geometry_weight: f64,
    pub noise: NoiseConfig,
    pub num_classes: usize,
    pub seed: u64,
    pub projection_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Speed range in scene units per frame.
    pub speed: [f64; 2],
    /// Per-frame probability of turning by up to ±90°.
    pub direction_change_prob: f64,
    /// Box width range.
    pub size: [f64; 2],
    /// Height/width ratio range.
    pub aspect: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionConfig {
    pub episodes: Vec<OcclusionEpisode>,
    pub random: Option<RandomOcclusion>,
    /// Upper bound on the duration of any episode, explicit or random.
    pub max_duration: u32,
}

/// Object `object` is invisible for frames `start..start + duration`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionEpisode {
    pub object: usize,
    pub start: u32,
    pub duration: u32,
}

/// Each object gets up to `max_episodes` attempts, each succeeding with
/// `probability`, at an episode with duration drawn from `gap` (inclusive).
/// Episodes never cover the first or last frame and are separated by at
/// least one visible frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomOcclusion {
    pub probability: f64,
    pub max_episodes: usize,
    pub gap: [u32; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Corner jitter standard deviation as a fraction of box width/height.
    pub box_jitter: f64,
    pub dropout: f64,
    /// Mean number of false positives per frame (Poisson).
    pub false_positive_rate: f64,
    /// Standard deviation of the per-detection appearance noise.
    pub feature_noise: f64,
    /// Standard deviation of the confidence draw `1 - |n|`.
    pub confidence_noise: f64,
    /// Uniform confidence range of false positives.
    pub false_positive_confidence: [f64; 2],
    /// Standard deviation of the class-logit noise.
    pub class_noise: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_objects: 4,
            clip_length: 8,
            arena: [640.0, 480.0],
            motion: MotionConfig::default(),
            occlusion: OcclusionConfig::default(),
            appearance_dim: 8,
            feature_dim: 32,
            geometry_weight: 1.0,
            noise: NoiseConfig::default(),
            num_classes: 1,
            seed: 0,
            projection_seed: 7,
        }
    }
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            speed: [2.0, 8.0],
            direction_change_prob: 0.05,
            size: [30.0, 60.0],
            aspect: [1.0, 2.0],
        }
    }
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            episodes: Vec::new(),
            random: None,
            max_duration: 16,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            box_jitter: 0.02,
            dropout: 0.0,
            false_positive_rate: 0.0,
            feature_noise: 0.3,
            confidence_noise: 0.1,
            false_positive_confidence: [0.6, 0.95],
            class_noise: 0.5,
        }
    }
}

impl NoiseConfig {
    /// No jitter, dropout, false positives or feature noise.
    pub fn noiseless() -> Self {
        Self {
            box_jitter: 0.0,
            dropout: 0.0,
            false_positive_rate: 0.0,
            feature_noise: 0.0,
            confidence_noise: 0.0,
            false_positive_confidence: [0.6, 0.95],
            class_noise: 0.0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    let ok = r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && (!positive || r[0] > 0.0);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} range {r:?} is invalid")))
    }
}

fn check_sigma(name: &str, s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {s} must be a finite non-negative value")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_objects == 0 {
            return Err(Error::Config("num_objects must be >= 1".into()));
        }
        if self.clip_length < 2 {
            return Err(Error::Config("clip_length must be >= 2".into()));
        }
        if self.appearance_dim == 0 || self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config(
                "appearance_dim, feature_dim and num_classes must be positive".into(),
            ));
        }
        check_range("arena", [self.arena[0].min(self.arena[1]), self.arena[0].max(self.arena[1])], true)?;
        check_range("motion.speed", self.motion.speed, false)?;
        if self.motion.speed[0] < 0.0 {
            return Err(Error::Config("motion.speed must be non-negative".into()));
        }
        check_range("motion.size", self.motion.size, true)?;
        check_range("motion.aspect", self.motion.aspect, true)?;
        let max_h = self.motion.size[1] * self.motion.aspect[1];
        if self.motion.size[1] >= self.arena[0] || max_h >= self.arena[1] {
            return Err(Error::Config("boxes do not fit inside the arena".into()));
        }
        check_prob("motion.direction_change_prob", self.motion.direction_change_prob)?;
        check_sigma("geometry_weight", self.geometry_weight)?;

        let n = &self.noise;
        check_sigma("noise.box_jitter", n.box_jitter)?;
        check_prob("noise.dropout", n.dropout)?;
        check_sigma("noise.false_positive_rate", n.false_positive_rate)?;
        check_sigma("noise.feature_noise", n.feature_noise)?;
        check_sigma("noise.confidence_noise", n.confidence_noise)?;
        check_sigma("noise.class_noise", n.class_noise)?;
        check_range("noise.false_positive_confidence", n.false_positive_confidence, true)?;
        if n.false_positive_confidence[1] > 1.0 {
            return Err(Error::Config("false-positive confidence must be <= 1".into()));
        }

        let occ = &self.occlusion;
        for ep in &occ.episodes {
            if ep.object >= self.num_objects {
                return Err(Error::Config(format!(
                    "occlusion episode names object {} but there are {} objects",
                    ep.object, self.num_objects
                )));
            }
            if ep.duration == 0 || ep.duration > occ.max_duration {
                return Err(Error::Config(format!(
                    "occlusion duration {} not in [1, {}]",
                    ep.duration, occ.max_duration
                )));
            }
            if ep.start < 1 || ep.start > self.clip_length {
                return Err(Error::Config(format!("occlusion start {} outside the clip", ep.start)));
            }
        }
        if let Some(r) = &occ.random {
            check_prob("occlusion.random.probability", r.probability)?;
            if r.gap[0] == 0 || r.gap[0] > r.gap[1] || r.gap[1] > occ.max_duration {
                return Err(Error::Config(format!(
                    "random occlusion gap {:?} must lie in [1, {}]",
                    r.gap, occ.max_duration
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
