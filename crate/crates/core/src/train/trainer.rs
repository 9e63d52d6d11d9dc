use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assign::{assign_gt, ClipAssignment};
use super::loss::{clip_loss, uniform_loss, ClipFeatures};
use crate::autodiff::{adamw_step, AdamWConfig, Graph};
use crate::error::{Error, Result};
use crate::head::{GtrParams, HeadConfig};
use crate::sim::{generate_scenario, render_detections, ScenarioConfig};

/// Training run description. Per-clip losses are summed over queries and
/// frames and averaged over the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub clip_length: u32,
    pub batch_size: usize,
    pub iterations: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    pub head: HeadConfig,
    /// Template for sampled clips; `seed` and `clip_length` are overridden.
    pub scenario: ScenarioConfig,
    /// Inclusive range the object count is drawn from per clip; `None`
    /// keeps the template's count.
    pub num_objects: Option<[usize; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            clip_length: 8,
            batch_size: 4,
            iterations: 1000,
            optimizer: AdamWConfig::default(),
            seed: 0,
            head: HeadConfig::default(),
            scenario: ScenarioConfig::default(),
            num_objects: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_length < 2 {
            return Err(Error::Config("clip_length must be >= 2".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some([lo, hi]) = self.num_objects {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("object range [{lo}, {hi}] is invalid")));
            }
        }
        if self.head.dim != self.scenario.feature_dim {
            return Err(Error::Config(format!(
                "head dim {} differs from scenario feature_dim {}",
                self.head.dim, self.scenario.feature_dim
            )));
        }
        self.head.validate()?;
        self.scenario.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: GtrParams,
    pub history: Vec<IterationLog>,
    /// Batch-mean of `N · Σ_t log(N_t + 1)` for the first batch.
    pub initial_uniform_loss: f64,
}

/// A sampled training clip with its labels.
#[derive(Clone, Debug)]
pub struct TrainingClip {
    pub seed: u64,
    pub features: ClipFeatures,
    pub assignment: ClipAssignment,
}

/// Clip `b` of iteration `it`; its scenario seed is a pure function of the
/// run seed, `it` and `b`.
pub fn sample_clip(cfg: &TrainConfig, it: usize, b: usize) -> Result<TrainingClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((it * cfg.batch_size + b) as u64 + 1);
    let seed: u64 = rng.random();
    let mut sc = cfg.scenario.clone();
    sc.seed = seed;
    sc.clip_length = cfg.clip_length;
    if let Some([lo, hi]) = cfg.num_objects {
        sc.num_objects = rng.random_range(lo..=hi);
    }
    let gt = generate_scenario(&sc)?;
    let dets = render_detections(&gt, &sc)?;
    Ok(TrainingClip {
        seed,
        features: ClipFeatures::new(&dets)?,
        assignment: assign_gt(&dets, &gt)?,
    })
}

/// Trains a freshly initialized head.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_from(GtrParams::new(cfg.head.clone())?, cfg)
}

/// Continues training `params` for `cfg.iterations` iterations.
pub fn train_from(mut params: GtrParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if params.config.dim != cfg.scenario.feature_dim {
        return Err(Error::Config("head width does not match the scenario features".into()));
    }
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut initial_uniform_loss = 0.0;
    let scale = 1.0 / cfg.batch_size as f64;

    for it in 0..cfg.iterations {
        params.store.zero_grad();
        let mut batch_loss = 0.0;
        for b in 0..cfg.batch_size {
            let clip = sample_clip(cfg, it, b)?;
            if it == 0 {
                initial_uniform_loss += uniform_loss(&clip.features.partition) * scale;
            }
            let mut g = Graph::new();
            let Some(loss) = clip_loss(&mut g, &params, &clip.features, &clip.assignment)? else {
                continue;
            };
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: it,
                    seed: clip.seed,
                });
            }
            batch_loss += value * scale;
            let scaled = g.scale(loss, scale);
            g.backward(scaled, &mut params.store)?;
        }
        let stats = adamw_step(&mut params.store, &cfg.optimizer)?;
        history.push(IterationLog {
            iteration: it,
            loss: batch_loss,
            grad_norm: stats.grad_norm,
        });
        if it % 100 == 0 {
            log::debug!("iteration {it}: loss {batch_loss:.4}, grad norm {:.4}", stats.grad_norm);
        }
    }
    params.store.zero_grad();
    Ok(TrainOutcome {
        params,
        history,
        initial_uniform_loss,
    })
}

/// Loss log as CSV: `iteration,loss,grad_norm`.
pub fn write_loss_log(history: &[IterationLog], mut out: impl Write) -> Result<()> {
    writeln!(out, "iteration,loss,grad_norm")?;
    for h in history {
        writeln!(out, "{},{:.9},{:.9}", h.iteration, h.loss, h.grad_norm)?;
    }
    Ok(())
}
