//! Synthetic scenes standing in for a detector: moving boxes with occlusion
//! episodes, rendered into noisy detections with appearance features.

mod clip;
mod config;
mod generate;

pub use clip::{Detection, DetectionClip, GroundTruthClip};
pub use config::{MotionConfig, NoiseConfig, OcclusionConfig, OcclusionEpisode, RandomOcclusion, ScenarioConfig};
pub use generate::{generate_scenario, render_detections, static_scene_clip, AugmentConfig, FeatureEmbedder};
