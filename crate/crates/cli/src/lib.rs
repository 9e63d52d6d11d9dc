//! The `gtr` command line: simulate, train, track, eval, ablate, gradcheck
//! and replay. Every pipeline run writes `manifest.json` into its output
//! directory; `replay` repeats a run from it and checks the outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gtr_core::autodiff::Checkpoint;
use gtr_core::baselines::{BaselineConfig, BaselineMode};
use gtr_core::experiment::{
    ablation_table, desk_head, desk_inference, desk_train_config, evaluate_baseline, evaluate_gtr, feature_noise_scenario,
    feature_noise_suite, gradcheck_clip, head_variants, occlusion_scenario, occlusion_suite, window_sweep, AblationRow,
    Sequence, SWEEP_WINDOWS,
};
use gtr_core::head::GtrParams;
use gtr_core::io::{
    read_json, read_mot_file, rows_to_trajectories, trajectories_to_rows, write_json, write_mot_csv, write_text,
    RunManifest,
};
use gtr_core::metrics::evaluate;
use gtr_core::sim::{generate_scenario, render_detections, DetectionClip, ScenarioConfig};
use gtr_core::tracker::{average_class_scores, postprocess, to_trajectories, track_sequence, InferenceConfig};
use gtr_core::train::{train, write_loss_log, TrainConfig};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "gtr", version, about = "Global tracking transformer at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario: ground truth (MOT CSV) and detections (JSON).
    Simulate(SimulateArgs),
    /// Train an association head on simulated clips.
    Train(TrainArgs),
    /// Track a detection clip with a trained head or a greedy baseline.
    Track(TrackArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Window-size sweep, head ablations and baselines on a scenario suite.
    Ablate(AblateArgs),
    /// Finite-difference check of the head and association loss.
    Gradcheck(GradcheckArgs),
    /// Repeat a run from its manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Default,
    Occlusion,
    Noise,
}

impl Preset {
    fn scenario(self, seed: u64) -> ScenarioConfig {
        match self {
            Preset::Default => ScenarioConfig {
                seed,
                ..ScenarioConfig::default()
            },
            Preset::Occlusion => occlusion_scenario(seed),
            Preset::Noise => feature_noise_scenario(seed),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario JSON; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "occlusion")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training JSON; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "occlusion")]
    preset: Preset,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dot_product: bool,
    #[arg(long)]
    pos_embedding: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Head checkpoint; required unless --baseline is given.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Run a greedy baseline (iou, reid or iou+reid) instead of the head.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value_t = 32)]
    window: usize,
    #[arg(long, default_value_t = 0.2)]
    theta: f64,
    #[arg(long, default_value_t = 0.55)]
    score_threshold: f64,
    #[arg(long)]
    use_location: bool,
    #[arg(long, default_value_t = 5)]
    min_length: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth MOT file; repeat together with --pred for several
    /// sequences.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Occlusion,
    Noise,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long, value_enum, default_value = "occlusion")]
    suite: Suite,
    /// Evaluate one trained head at T = 2, 4, 8, 16, 32.
    #[arg(long)]
    window_sweep: bool,
    /// Train and evaluate every head variant.
    #[arg(long)]
    heads: bool,
    /// Greedy IoU, ReID and combined baselines.
    #[arg(long)]
    baselines: bool,
    /// Training seeds per head variant.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

/// Parses and runs `argv` (program name first) relative to the current
/// directory, printing errors; returns the exit code.
pub fn main_with_args(argv: &[String]) -> i32 {
    let cwd = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, argv, &cwd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Runs `argv` with relative paths resolved against `base`.
pub fn run_in(argv: &[String], base: &Path) -> Result<()> {
    let cli = Cli::try_parse_from(argv)?;
    run(cli, argv, base)
}

fn run(cli: Cli, argv: &[String], base: &Path) -> Result<()> {
    let ctx = Invocation {
        argv: argv.iter().skip(1).cloned().collect(),
        base: base.to_path_buf(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Track(a) => track_cmd(&ctx, a),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Ablate(a) => ablate_cmd(&ctx, a),
        Command::Gradcheck(a) => gradcheck_cmd(&ctx, a),
        Command::Replay(a) => replay(&ctx, a),
    }
}

struct Invocation {
    argv: Vec<String>,
    base: PathBuf,
}

impl Invocation {
    fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn manifest(&self, command: &str, seed: Option<u64>, config: serde_json::Value) -> RunManifest {
        let mut m = RunManifest::new(command, self.argv.clone(), seed, config);
        m.working_dir = Some(self.base.clone());
        m
    }
}

fn finish(mut m: RunManifest, out: &Path, outputs: &[&str]) -> Result<()> {
    for name in outputs {
        m.add_output(out.join(name))?;
    }
    m.save(out.join("manifest.json"))?;
    Ok(())
}

fn simulate(ctx: &Invocation, a: SimulateArgs) -> Result<()> {
    let mut manifest_inputs = Vec::new();
    let mut cfg = match &a.config {
        Some(p) => {
            let p = ctx.path(p);
            manifest_inputs.push(p.clone());
            read_json::<ScenarioConfig>(&p)?
        }
        None => a.preset.scenario(0),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let gt = generate_scenario(&cfg)?;
    let dets = render_detections(&gt, &cfg)?;
    let out = ctx.path(&a.out);
    write_json(out.join("scenario.json"), &cfg)?;
    write_text(
        out.join("gt.txt"),
        &write_mot_csv(&trajectories_to_rows(&gt.labelled_trajectories(cfg.num_classes))),
    )?;
    write_json(out.join("detections.json"), &dets)?;
    println!(
        "{} frames, {} objects, {} detections -> {}",
        gt.num_frames,
        gt.trajectories.len(),
        dets.num_detections(),
        out.display()
    );
    let mut m = ctx.manifest("simulate", Some(cfg.seed), serde_json::to_value(&cfg)?);
    for p in manifest_inputs {
        m.add_input(p)?;
    }
    finish(m, &out, &["scenario.json", "gt.txt", "detections.json"])
}

fn train_cmd(ctx: &Invocation, a: TrainArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let mut cfg = match &a.config {
        Some(p) => {
            let p = ctx.path(p);
            inputs.push(p.clone());
            read_json::<TrainConfig>(&p)?
        }
        None => desk_train_config(a.preset.scenario(0), desk_head(0), 0),
    };
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.head.init_seed = s;
    }
    cfg.head.dot_product_only |= a.dot_product;
    cfg.head.positional_embedding |= a.pos_embedding;
    let outcome = train(&cfg)?;
    let out = ctx.path(&a.out);
    write_json(out.join("train_config.json"), &cfg)?;
    outcome.params.to_checkpoint()?.save(&out.join("checkpoint.json"))?;
    let mut log = Vec::new();
    write_loss_log(&outcome.history, &mut log)?;
    write_text(out.join("loss.csv"), std::str::from_utf8(&log)?)?;
    let last = outcome.history.last().map_or(f64::NAN, |h| h.loss);
    println!(
        "{} iterations, loss {:.4} -> {:.4} (uniform {:.4})",
        outcome.history.len(),
        outcome.history.first().map_or(f64::NAN, |h| h.loss),
        last,
        outcome.initial_uniform_loss
    );
    let mut m = ctx.manifest("train", Some(cfg.seed), serde_json::to_value(&cfg)?);
    for p in inputs {
        m.add_input(p)?;
    }
    finish(m, &out, &["train_config.json", "checkpoint.json", "loss.csv"])
}

fn track_cmd(ctx: &Invocation, a: TrackArgs) -> Result<()> {
    let det_path = ctx.path(&a.detections);
    let dets: DetectionClip = read_json(&det_path)?;
    dets.validate()?;
    let out = ctx.path(&a.out);
    let icfg = InferenceConfig {
        window: a.window,
        new_track_threshold: a.theta,
        score_threshold: a.score_threshold,
        use_location: a.use_location,
        min_track_length: a.min_length,
    };
    let mut m;
    let mut outputs = vec!["results.txt"];
    let tracks = match (&a.baseline, &a.checkpoint) {
        (Some(mode), _) => {
            let bcfg = BaselineConfig {
                mode: mode.parse::<BaselineMode>()?,
                score_threshold: a.score_threshold,
                ..BaselineConfig::default()
            };
            m = ctx.manifest("track", None, json!({ "baseline": bcfg, "min_track_length": a.min_length }));
            gtr_core::baselines::greedy_track(&dets, &bcfg)?
        }
        (None, Some(ck)) => {
            let ck = ctx.path(ck);
            let params = GtrParams::from_checkpoint(&Checkpoint::load(&ck)?)?;
            if params.config.dim != dets.feature_dim {
                bail!(
                    "checkpoint width {} does not match detection features of width {}",
                    params.config.dim,
                    dets.feature_dim
                );
            }
            let result = track_sequence(&dets, &params, &icfg)?;
            write_json(out.join("trace.json"), &result.trace)?;
            outputs.push("trace.json");
            m = ctx.manifest("track", None, serde_json::to_value(&icfg)?);
            m.add_input(&ck)?;
            result.tracks
        }
        (None, None) => bail!("track needs --checkpoint or --baseline"),
    };
    m.add_input(&det_path)?;
    let tracks = average_class_scores(postprocess(tracks, &icfg));
    let trajs = to_trajectories(&tracks)?;
    write_text(out.join("results.txt"), &write_mot_csv(&trajectories_to_rows(&trajs)))?;
    println!("{} tracks -> {}", trajs.len(), out.display());
    finish(m, &out, &outputs)
}

fn eval_cmd(ctx: &Invocation, a: EvalArgs) -> Result<()> {
    if a.gt.len() != a.pred.len() {
        bail!("{} --gt files but {} --pred files", a.gt.len(), a.pred.len());
    }
    let mut m = ctx.manifest("eval", None, json!({ "iou_threshold": gtr_core::metrics::MATCH_IOU }));
    let mut seqs = Vec::new();
    for (g, p) in a.gt.iter().zip(&a.pred) {
        let (g, p) = (ctx.path(g), ctx.path(p));
        let gt = rows_to_trajectories(&read_mot_file(&g)?)?;
        let pred = rows_to_trajectories(&read_mot_file(&p)?)?;
        m.add_input(&g)?;
        m.add_input(&p)?;
        let name = p
            .parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        seqs.push((name, gt, pred));
    }
    let summary = evaluate(&seqs)?;
    let out = ctx.path(&a.out);
    let table = summary.table();
    print!("{table}");
    write_json(out.join("report.json"), &summary)?;
    write_text(out.join("report.txt"), &table)?;
    finish(m, &out, &["report.json", "report.txt"])
}

fn ablate_cmd(ctx: &Invocation, a: AblateArgs) -> Result<()> {
    let all = !(a.window_sweep || a.heads || a.baselines);
    let (seqs, template): (Vec<Sequence>, ScenarioConfig) = match a.suite {
        Suite::Occlusion => (occlusion_suite()?, occlusion_scenario(0)),
        Suite::Noise => (feature_noise_suite()?, feature_noise_scenario(0)),
    };
    let train_cfg = |head, seed| {
        let mut cfg = desk_train_config(template.clone(), head, seed);
        if let Some(n) = a.iterations {
            cfg.iterations = n;
        }
        cfg
    };
    let mut report = serde_json::Map::new();
    let mut text = String::new();

    if all || a.window_sweep {
        let outcome = train(&train_cfg(desk_head(0), 0))?;
        let rows = window_sweep(&outcome.params, &seqs, &SWEEP_WINDOWS)?;
        text += &ablation_table("window sweep", &rows);
        report.insert("window_sweep".into(), serde_json::to_value(&rows)?);
    }
    if all || a.heads {
        let mut rows = Vec::new();
        for (name, _) in head_variants(0) {
            let mut acc: Vec<AblationRow> = Vec::new();
            for seed in 0..a.seeds.max(1) {
                let head = head_variants(seed)
                    .into_iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, h)| h)
                    .context("head variant list changed between seeds")?;
                let outcome = train(&train_cfg(head, seed))?;
                let summary = evaluate_gtr(&outcome.params, &seqs, &desk_inference(16))?;
                acc.push(AblationRow::new(format!("{name}/seed{seed}"), &summary));
            }
            rows.extend(acc);
        }
        text += &ablation_table("head variants (T=16)", &rows);
        report.insert("heads".into(), serde_json::to_value(&rows)?);
    }
    if all || a.baselines {
        let mut rows = Vec::new();
        for mode in [BaselineMode::Iou, BaselineMode::Reid, BaselineMode::IouReid] {
            let cfg = BaselineConfig {
                mode,
                ..BaselineConfig::default()
            };
            let summary = evaluate_baseline(&seqs, &cfg, desk_inference(16).min_track_length)?;
            rows.push(AblationRow::new(format!("{mode:?}").to_lowercase(), &summary));
        }
        text += &ablation_table("greedy baselines", &rows);
        report.insert("baselines".into(), serde_json::to_value(&rows)?);
    }
    print!("{text}");
    let out = ctx.path(&a.out);
    write_text(out.join("ablation.txt"), &text)?;
    write_json(out.join("ablation.json"), &report)?;
    let m = ctx.manifest(
        "ablate",
        Some(0),
        json!({ "suite": format!("{:?}", a.suite).to_lowercase(), "training": train_cfg(desk_head(0), 0) }),
    );
    finish(m, &out, &["ablation.txt", "ablation.json"])
}

fn gradcheck_cmd(ctx: &Invocation, a: GradcheckArgs) -> Result<()> {
    let report = gradcheck_clip(a.seed)?;
    println!(
        "max relative error {:.3e} over {} parameters ({} detections, {} frames, D = {})",
        report.max_relative_error, report.num_parameters, report.num_detections, report.num_frames, report.dim
    );
    let out = ctx.path(&a.out);
    write_json(out.join("gradcheck.json"), &report)?;
    finish(ctx.manifest("gradcheck", Some(a.seed), json!({ "eps": 1e-5 })), &out, &["gradcheck.json"])?;
    if !(report.max_relative_error < GRADCHECK_TOLERANCE) {
        bail!(
            "max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        );
    }
    Ok(())
}

fn replay(ctx: &Invocation, a: ReplayArgs) -> Result<()> {
    let path = ctx.path(&a.manifest);
    let m = RunManifest::load(&path)?;
    let changed = m.changed_inputs()?;
    if !changed.is_empty() {
        bail!("inputs changed since the run: {changed:?}");
    }
    let base = m.working_dir.clone().unwrap_or_else(|| ctx.base.clone());
    let mut argv = vec!["gtr".to_string()];
    argv.extend(m.argv.iter().cloned());
    run_in(&argv, &base)?;
    let rerun = RunManifest::load(&path)?;
    let differ: Vec<_> = m
        .outputs
        .iter()
        .filter(|d| !rerun.outputs.contains(d))
        .map(|d| d.path.display().to_string())
        .collect();
    if !differ.is_empty() {
        bail!("replay produced different outputs: {}", differ.join(", "));
    }
    println!("{} outputs reproduced byte-for-byte", m.outputs.len());
    Ok(())
}
