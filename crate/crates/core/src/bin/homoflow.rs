//! Command-line entry point: synth, estimate, classify, sample, train,
//! predict, eval, bench and the end-to-end pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use homoflow::classify::distribution_over;
use homoflow::estimation::{EstimatorConfig, RansacConfig};
use homoflow::evaluation::{
    bench_table, center_displacement, center_scatter_svg, evaluate_clips, label_agreement,
    run_benchmark, warp_overlay, EvalReport, LabeledPrediction, SequenceEstimator,
};
use homoflow::frame::list_frame_files;
use homoflow::manifest::{manifest_path, ManifestBuilder};
use homoflow::pipeline::{
    build_samples, cmd_synth_gen, discover_videos, dry_run_plan, estimate_track, load_labels,
    resolve_threads, run_pipeline, CueRuleConfig, PipelineConfig, PipelineError, SynthGenConfig,
    SynthKind, VideoDir, TRUTH_TRACK,
};
use homoflow::predictor::{
    train, train_log_to_csv, AugmentationPolicy, DataSample, PredictorModel, TrainConfig,
};
use homoflow::sampling::{
    compute_sigma, importance_sample, Clip, ClipIndex, ClipSpec, MotionTrack, SamplingError,
};
use homoflow::synthetic::{
    generate_scene, generate_trajectory, render_frame, RenderOptions, TrajectoryKind,
};
use homoflow::{FrameGeometry, GrayFrame, MotionClass};

#[derive(Parser)]
#[command(name = "homoflow", version, about = "Self-supervised camera-motion imitation from video")]
struct Cli {
    /// Worker threads (default: HOMOFLOW_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic dataset tools.
    Synth {
        #[command(subcommand)]
        cmd: SynthCmd,
    },
    /// Offline camera-motion estimation over a frame directory.
    Estimate(EstimateArgs),
    /// Motion-class distribution of one or more tracks.
    Classify(ClassifyArgs),
    /// Importance-sample clips whose recall horizon ends on an anchor.
    Sample(SampleArgs),
    /// Train the motion predictor on sampled clips.
    Train(TrainArgs),
    /// Run a trained predictor over clips.
    Predict(PredictArgs),
    /// Evaluate a model against the Taylor baselines (and labels).
    Eval(EvalArgs),
    /// Time the registered estimators on a seeded sequence.
    Bench(BenchArgs),
    /// Full run: sample, train, evaluate, with manifest.
    Pipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Render a synthetic video (frames/, truth.jsonl, labels.csv).
    Gen(SynthGenArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    /// Trajectory kind: cue, constant, accel, switches.
    #[arg(long, default_value = "cue")]
    kind: String,
    #[arg(long, default_value_t = 3000)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 320)]
    width: u32,
    #[arg(long, default_value_t = 240)]
    height: u32,
    #[arg(long, default_value_t = 1024)]
    canvas: u32,
    /// Truth-track frame increment.
    #[arg(long, default_value_t = 5)]
    dn: usize,
    /// Cue rule: horizontal or quadrant.
    #[arg(long, default_value = "quadrant")]
    rule: String,
    #[arg(long, default_value_t = 1.2)]
    step_px: f64,
    #[arg(long, default_value_t = 5)]
    gap: usize,
    #[arg(long, default_value_t = 5)]
    burst: usize,
    /// Velocity for constant/accel/switches kinds.
    #[arg(long, default_value_t = 2.0)]
    vx: f64,
    #[arg(long, default_value_t = 0.0)]
    vy: f64,
    /// Switch period for the switches kind.
    #[arg(long, default_value_t = 40)]
    every: usize,
    /// Independently moving patch area fraction (0 disables).
    #[arg(long, default_value_t = 0.0)]
    object_area: f64,
    /// Per-frame Gaussian pixel noise sigma (0 disables).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Directory of frames (or a video directory containing frames/).
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value_t = 5)]
    dn: usize,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = 2.0)]
    inlier_threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    min_inlier_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_corners: usize,
    #[arg(long, default_value_t = 11)]
    window: u32,
    #[arg(long, default_value_t = 24)]
    search_radius: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Track file (.jsonl) or a video root directory.
    #[arg(long)]
    tracks: PathBuf,
    /// Read truth.jsonl instead of track.jsonl when given a root.
    #[arg(long)]
    use_truth: bool,
    /// Dataset sigma override; computed from the tracks when absent.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also render an SVG bar chart.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    use_truth: bool,
    #[arg(long, default_value_t = 14)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    dn: usize,
    #[arg(long, default_value_t = 5)]
    dc: usize,
    /// Clips to draw (all candidates when larger than the candidate set).
    #[arg(long, default_value_t = usize::MAX)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    clips: PathBuf,
    /// Video root directory (frames + tracks).
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    use_truth: bool,
    /// JSON training config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    clips: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    use_truth: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [32u32, 32u32])]
    downsample: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    clips: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    use_truth: bool,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Explicit label CSV; per-video labels.csv are found automatically.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [32u32, 32u32])]
    downsample: Vec<u32>,
    /// Render warp overlays for the first K clips.
    #[arg(long, default_value_t = 0)]
    overlays: usize,
    /// Render the center-displacement scatter SVG.
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Sequence length (frames).
    #[arg(long, default_value_t = 15)]
    length: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline JSON config; missing fields take defaults.
    #[arg(long)]
    config: PathBuf,
    /// Validate the config and print the plan without running.
    #[arg(long)]
    dry_run: bool,
    /// Override the configured output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let threads = resolve_threads(cli.threads);
    let result = match cli.command {
        Command::Synth { cmd: SynthCmd::Gen(args) } => cmd_synth(args),
        Command::Estimate(args) => cmd_estimate(args, threads),
        Command::Classify(args) => cmd_classify(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Pipeline(args) => cmd_pipeline(args, cli.threads),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(e.exit_code());
    }
}

fn bad_input(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::BadInput(msg.to_string())
}

fn synth_config(args: &SynthGenArgs) -> Result<SynthGenConfig, PipelineError> {
    let rule = match args.rule.as_str() {
        "horizontal" => CueRuleConfig::Horizontal,
        "quadrant" => CueRuleConfig::Quadrant,
        other => return Err(bad_input(format!("unknown cue rule {other}"))),
    };
    let kind = match args.kind.as_str() {
        "cue" => SynthKind::Cue {
            rule,
            step_px: args.step_px,
            gap: args.gap,
            burst: args.burst,
        },
        "constant" => SynthKind::ConstantVelocity { vx: args.vx, vy: args.vy },
        "accel" => SynthKind::LinearAcceleration { bx: args.vx, by: args.vy, ix: 0.1, iy: 0.0 },
        "switches" => SynthKind::Switches { speed: args.vx.max(0.5), every: args.every },
        other => return Err(bad_input(format!("unknown trajectory kind {other}"))),
    };
    Ok(SynthGenConfig {
        kind,
        frames: args.frames,
        seed: args.seed,
        width: args.width,
        height: args.height,
        canvas_size: args.canvas,
        dn: args.dn,
        object_area: (args.object_area > 0.0).then_some(args.object_area),
        photometric_noise: (args.noise > 0.0).then_some(args.noise),
    })
}

fn cmd_synth(args: SynthGenArgs) -> Result<(), PipelineError> {
    let cfg = synth_config(&args)?;
    let mut manifest = ManifestBuilder::new(
        "synth gen",
        serde_json::to_value(&cfg).expect("config serializes"),
    );
    manifest.seed("scene", cfg.seed);
    cmd_synth_gen(&cfg, &args.out)?;
    manifest.output(&args.out.join("frames"));
    manifest.output(&args.out.join(TRUTH_TRACK));
    let m = manifest.finish();
    m.save(&manifest_path(&args.out)).map_err(bad_input)?;
    println!("wrote {} frames under {}", cfg.frames, args.out.display());
    Ok(())
}

/// Treats `dir` as a frames directory, or as a video directory with a
/// `frames/` child.
fn video_from_frames_arg(dir: &Path) -> Result<VideoDir, PipelineError> {
    let frames_dir =
        if dir.join("frames").is_dir() { dir.join("frames") } else { dir.to_path_buf() };
    let frame_files = list_frame_files(&frames_dir).map_err(bad_input)?;
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    Ok(VideoDir { id, dir: dir.to_path_buf(), frame_files })
}

fn cmd_estimate(args: EstimateArgs, threads: usize) -> Result<(), PipelineError> {
    let cfg = EstimatorConfig {
        max_corners: args.max_corners,
        window: args.window,
        search_radius: args.search_radius,
        ransac: RansacConfig {
            max_iters: args.max_iters,
            inlier_threshold: args.inlier_threshold,
            min_inlier_ratio: args.min_inlier_ratio,
            seed: args.seed,
        },
        ..EstimatorConfig::default()
    };
    let video = video_from_frames_arg(&args.frames)?;
    let mut manifest = ManifestBuilder::new(
        "estimate",
        serde_json::json!({
            "frames": args.frames.display().to_string(),
            "dn": args.dn,
            "estimator": cfg,
        }),
    );
    manifest.seed("ransac", args.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let track = pool.install(|| estimate_track(&video, args.dn, &cfg, args.fps))?;
    track.save_jsonl(&args.out).map_err(bad_input)?;
    manifest.output(&args.out);
    let m = manifest.finish();
    m.save(&args.out.with_extension("manifest.json")).map_err(bad_input)?;
    println!(
        "estimated {} motions ({} missing) -> {}",
        track.len(),
        track.missing_count(),
        args.out.display()
    );
    Ok(())
}

/// Loads all tracks named by a path that is either a single .jsonl file or a
/// video root.
fn load_tracks(path: &Path, use_truth: bool) -> Result<Vec<MotionTrack>, PipelineError> {
    if path.is_file() {
        return Ok(vec![MotionTrack::load_jsonl(path).map_err(bad_input)?]);
    }
    let videos = discover_videos(path)?;
    videos
        .iter()
        .map(|v| MotionTrack::load_jsonl(&v.track_path(use_truth)).map_err(bad_input))
        .collect()
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), PipelineError> {
    let tracks = load_tracks(&args.tracks, args.use_truth)?;
    let sigma = match args.sigma {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(bad_input(format!("sigma must be positive, got {s}"))),
        None => compute_sigma(&tracks).map_err(bad_input)?.max(1e-9),
    };
    let geom = tracks[0].geometry;
    let missing: usize = tracks.iter().map(|t| t.missing_count()).sum();
    let dist = distribution_over(
        tracks.iter().flat_map(|t| t.present_deltas().map(|(_, d)| d)),
        missing,
        sigma,
        &geom,
    )
    .map_err(bad_input)?;
    std::fs::create_dir_all(&args.out).map_err(bad_input)?;
    std::fs::write(
        args.out.join("distribution.json"),
        serde_json::to_string_pretty(&dist.to_json()).expect("report serializes"),
    )
    .map_err(bad_input)?;
    std::fs::write(args.out.join("distribution.csv"), dist.to_csv()).map_err(bad_input)?;
    if args.svg {
        std::fs::write(args.out.join("distribution.svg"), dist.to_svg()).map_err(bad_input)?;
    }
    let mut manifest = ManifestBuilder::new(
        "classify",
        serde_json::json!({"tracks": args.tracks.display().to_string(), "sigma": sigma}),
    );
    manifest.output(&args.out.join("distribution.json"));
    manifest.finish().save(&manifest_path(&args.out)).map_err(bad_input)?;
    print!("{}", dist.to_csv());
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<(), PipelineError> {
    let tracks = load_tracks(&args.tracks, args.use_truth)?;
    let spec = ClipSpec::new(args.n, args.m, args.dn, args.dc).map_err(bad_input)?;
    for t in &tracks {
        if t.dn != args.dn {
            return Err(bad_input(format!(
                "track {} has dn {} but --dn is {}",
                t.video_id, t.dn, args.dn
            )));
        }
    }
    let sigma = compute_sigma(&tracks).map_err(bad_input)?;
    let mut clips: Vec<Clip> = Vec::new();
    for t in &tracks {
        match importance_sample(t, sigma, &spec, args.count, args.seed) {
            Ok(mut c) => clips.append(&mut c),
            Err(SamplingError::NoCandidates) => {}
            Err(e) => return Err(bad_input(e)),
        }
    }
    if clips.is_empty() {
        return Err(PipelineError::QualityGate("no candidate clips in any track".into()));
    }
    let index = ClipIndex::from_clips(spec, sigma, &clips);
    index.save(&args.out).map_err(bad_input)?;
    let mut manifest = ManifestBuilder::new(
        "sample",
        serde_json::json!({
            "tracks": args.tracks.display().to_string(),
            "spec": spec, "count": args.count, "sigma": sigma,
        }),
    );
    manifest.seed("sample", args.seed);
    manifest.output(&args.out);
    manifest.finish().save(&args.out.with_extension("manifest.json")).map_err(bad_input)?;
    println!("sampled {} clips (sigma {:.4}) -> {}", clips.len(), sigma, args.out.display());
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize, Clone)]
#[serde(default)]
struct TrainFileConfig {
    train: TrainConfig,
    augmentation: AugmentationPolicy,
    split_val: f64,
    downsample: (u32, u32),
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            augmentation: AugmentationPolicy::default(),
            split_val: 0.1,
            downsample: (32, 32),
        }
    }
}

fn load_train_config(path: Option<&Path>) -> Result<TrainFileConfig, PipelineError> {
    let Some(p) = path else { return Ok(TrainFileConfig::default()) };
    let text = std::fs::read_to_string(p).map_err(bad_input)?;
    let cfg: TrainFileConfig =
        serde_json::from_str(&text).map_err(|e| bad_input(format!("{}: {e}", p.display())))?;
    if cfg.downsample.0 < 2 || cfg.downsample.1 < 2 {
        return Err(bad_input("downsample dimensions must be at least 2"));
    }
    Ok(cfg)
}

/// Collects (clip, sample) pairs for every clip in the index.
fn samples_for_index(
    tracks_root: &Path,
    use_truth: bool,
    index: &ClipIndex,
    downsample: (u32, u32),
) -> Result<Vec<(Clip, DataSample)>, PipelineError> {
    let videos = discover_videos(tracks_root)?;
    let clips = index.to_clips();
    let mut out = Vec::with_capacity(clips.len());
    for video in &videos {
        let of_video: Vec<Clip> =
            clips.iter().filter(|c| c.video_id == video.id).cloned().collect();
        if of_video.is_empty() {
            continue;
        }
        let track = MotionTrack::load_jsonl(&video.track_path(use_truth)).map_err(bad_input)?;
        out.extend(build_samples(video, &track, &of_video, downsample)?);
    }
    if out.len() != clips.len() {
        return Err(bad_input(format!(
            "clip index references {} clips but only {} were resolvable",
            clips.len(),
            out.len()
        )));
    }
    Ok(out)
}

fn cmd_train(args: TrainArgs) -> Result<(), PipelineError> {
    let cfg = load_train_config(args.config.as_deref())?;
    let index = ClipIndex::load(&args.clips).map_err(bad_input)?;
    let items = samples_for_index(&args.tracks, args.use_truth, &index, cfg.downsample)?;
    let n_val = ((items.len() as f64) * cfg.split_val).floor() as usize;
    let n_train = items.len() - n_val;
    let train_set: Vec<DataSample> = items.iter().take(n_train).map(|(_, s)| s.clone()).collect();
    let val_set: Vec<DataSample> = items.iter().skip(n_train).map(|(_, s)| s.clone()).collect();
    let (model, log) =
        train(&train_set, &val_set, &cfg.train, &cfg.augmentation).map_err(bad_input)?;
    model.save(&args.out).map_err(bad_input)?;
    let log_path = args.out.with_extension("loss_log.csv");
    std::fs::write(&log_path, train_log_to_csv(&log)).map_err(bad_input)?;
    let mut manifest = ManifestBuilder::new(
        "train",
        serde_json::json!({
            "clips": args.clips.display().to_string(),
            "tracks": args.tracks.display().to_string(),
            "train": cfg.train, "augmentation": cfg.augmentation,
            "split_val": cfg.split_val, "downsample": cfg.downsample,
        }),
    );
    manifest.seed("train", cfg.train.seed).seed("augmentation", cfg.augmentation.seed);
    manifest.input(&args.clips);
    manifest.output(&args.out);
    manifest.finish().save(&args.out.with_extension("manifest.json")).map_err(bad_input)?;
    if let Some(last) = log.last() {
        println!(
            "trained {} epochs on {} clips (final train loss {:.4}) -> {}",
            log.len(),
            n_train,
            last.train_loss,
            args.out.display()
        );
    }
    Ok(())
}

fn downsample_pair(v: &[u32]) -> Result<(u32, u32), PipelineError> {
    match v {
        [w, h] if *w >= 2 && *h >= 2 => Ok((*w, *h)),
        _ => Err(bad_input("--downsample takes two dimensions, each at least 2")),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<(), PipelineError> {
    let model = PredictorModel::load(&args.model).map_err(bad_input)?;
    let index = ClipIndex::load(&args.clips).map_err(bad_input)?;
    let items = samples_for_index(
        &args.tracks,
        args.use_truth,
        &index,
        downsample_pair(&args.downsample)?,
    )?;
    let inputs: Vec<_> = items.iter().map(|(_, s)| s.input.clone()).collect();
    let preds = model.forward_many(&inputs).map_err(bad_input)?;
    let rows: Vec<serde_json::Value> = items
        .iter()
        .zip(preds.iter())
        .map(|((clip, _), pred)| {
            serde_json::json!({
                "video_id": clip.video_id,
                "start": clip.start,
                "pred": pred.iter().map(|d| d.to_flat().to_vec()).collect::<Vec<_>>(),
            })
        })
        .collect();
    std::fs::write(&args.out, serde_json::to_string_pretty(&rows).expect("predictions serialize"))
        .map_err(bad_input)?;
    println!("wrote {} predictions -> {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), PipelineError> {
    let index = ClipIndex::load(&args.clips).map_err(bad_input)?;
    let downsample = downsample_pair(&args.downsample)?;
    let items = samples_for_index(&args.tracks, args.use_truth, &index, downsample)?;
    let model = match &args.model {
        Some(p) => Some(PredictorModel::load(p).map_err(bad_input)?),
        None => None,
    };
    let (methods, per_clip) = evaluate_clips(&items, model.as_ref()).map_err(bad_input)?;

    // Labels: explicit file, else per-video labels.csv.
    let videos = discover_videos(&args.tracks)?;
    let mut labels: BTreeMap<(String, usize), MotionClass> = BTreeMap::new();
    if let Some(p) = &args.labels {
        labels.extend(load_labels(p)?);
    } else {
        for v in &videos {
            let p = v.labels_path();
            if p.is_file() {
                labels.extend(load_labels(&p)?);
            }
        }
    }
    let geom = items[0].1.input.geom;
    let agreement = match (&model, labels.is_empty()) {
        (Some(model), false) => {
            let inputs: Vec<_> = items.iter().map(|(_, s)| s.input.clone()).collect();
            let preds = model.forward_many(&inputs).map_err(bad_input)?;
            let mut labeled = Vec::new();
            let mut lookup = BTreeMap::new();
            let mut scatter: Vec<((f64, f64), MotionClass)> = Vec::new();
            for ((clip, _), pred) in items.iter().zip(preds.into_iter()) {
                let key = (clip.video_id.clone(), clip.preview_motion_indices()[0]);
                let Some(class) = labels.get(&key) else { continue };
                if !matches!(
                    class,
                    MotionClass::Up | MotionClass::Down | MotionClass::Left | MotionClass::Right
                ) {
                    continue;
                }
                if args.svg {
                    if let Ok(cd) = center_displacement(&pred[0], &geom) {
                        scatter.push((cd, *class));
                    }
                }
                lookup.insert((clip.video_id.clone(), clip.start), *class);
                labeled.push(LabeledPrediction {
                    video_id: clip.video_id.clone(),
                    start: clip.start,
                    pred,
                });
            }
            if args.svg && !scatter.is_empty() {
                std::fs::create_dir_all(&args.out).map_err(bad_input)?;
                std::fs::write(args.out.join("center_scatter.svg"), center_scatter_svg(&scatter))
                    .map_err(bad_input)?;
            }
            if labeled.is_empty() {
                None
            } else {
                Some(label_agreement(&labeled, &lookup, &geom).map_err(bad_input)?)
            }
        }
        _ => None,
    };

    let report = EvalReport {
        config: serde_json::json!({
            "clips": args.clips.display().to_string(),
            "tracks": args.tracks.display().to_string(),
            "model": args.model.as_ref().map(|p| p.display().to_string()),
            "downsample": downsample,
        }),
        methods,
        per_clip,
        label_agreement: agreement,
    };
    report.save(&args.out).map_err(bad_input)?;

    if args.overlays > 0 {
        if let Some(model) = &model {
            let overlay_dir = args.out.join("overlays");
            std::fs::create_dir_all(&overlay_dir).map_err(bad_input)?;
            for (clip, sample) in items.iter().take(args.overlays) {
                let video = videos
                    .iter()
                    .find(|v| v.id == clip.video_id)
                    .ok_or_else(|| bad_input(format!("unknown video {}", clip.video_id)))?;
                let past = video.load_frame(clip.recall_end_frame())?;
                let current = video.load_frame(clip.recall_end_frame() + clip.spec.dn)?;
                let pred = model.forward(&sample.input).map_err(bad_input)?;
                let overlay = warp_overlay(&past, &current, &pred[0]).map_err(bad_input)?;
                overlay
                    .save_png(&overlay_dir.join(format!(
                        "{}_{:06}_model.png",
                        clip.video_id,
                        clip.recall_end_frame()
                    )))
                    .map_err(bad_input)?;
            }
        }
    }

    for (name, stats) in &report.methods {
        println!("{name}: MPD {:.4} +- {:.4} px", stats.mpd_mean, stats.mpd_std);
    }
    if let Some(a) = &report.label_agreement {
        println!("label agreement: {:?} (negated: {})", a.overall_agreement, a.negated);
    }
    let mut manifest = ManifestBuilder::new("eval", report.config.clone());
    manifest.input(&args.clips);
    manifest.output(&args.out.join("report.json"));
    manifest.finish().save(&manifest_path(&args.out)).map_err(bad_input)?;
    Ok(())
}

struct ClassicalEstimator {
    label: String,
    cfg: EstimatorConfig,
}

impl SequenceEstimator for ClassicalEstimator {
    fn name(&self) -> &str {
        &self.label
    }
    fn estimate_sequence(
        &self,
        frames: &[GrayFrame],
    ) -> Result<Vec<homoflow::FourPointDelta>, homoflow::EstimationError> {
        frames
            .windows(2)
            .map(|w| homoflow::estimation::estimate_motion_with(&w[0], &w[1], &self.cfg))
            .collect()
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), PipelineError> {
    let geom = FrameGeometry::new(320, 240);
    let scene = generate_scene(args.seed, 1024);
    let kind = TrajectoryKind::ConstantVelocity { velocity: (2.0, 1.0) };
    let traj =
        generate_trajectory(&kind, args.length, &geom, 1024, args.seed).map_err(bad_input)?;
    let frames: Result<Vec<GrayFrame>, _> = (0..traj.frames())
        .map(|t| render_frame(&scene, &traj, &geom, &RenderOptions::default(), t))
        .collect();
    let frames = frames.map_err(bad_input)?;

    let full = ClassicalEstimator { label: "zncc_ransac".into(), cfg: EstimatorConfig::default() };
    let lite = ClassicalEstimator {
        label: "zncc_ransac_lite".into(),
        cfg: EstimatorConfig {
            max_corners: 100,
            search_radius: 12,
            ransac: RansacConfig { max_iters: 500, ..RansacConfig::default() },
            ..EstimatorConfig::default()
        },
    };
    let rows = run_benchmark(&[&full, &lite], &frames, args.repeats).map_err(bad_input)?;
    let table = bench_table(&rows);
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(bad_input)?;
            std::fs::write(dir.join("bench.csv"), &table).map_err(bad_input)?;
            let mut manifest = ManifestBuilder::new(
                "bench",
                serde_json::json!({"length": args.length, "repeats": args.repeats}),
            );
            manifest.seed("sequence", args.seed);
            manifest.output(&dir.join("bench.csv"));
            manifest.finish().save(&manifest_path(dir)).map_err(bad_input)?;
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs, threads: Option<usize>) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| bad_input(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| bad_input(format!("{}: {e}", args.config.display())))?;
    if let Some(t) = threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = args.out_dir {
        cfg.out_dir = out;
    }
    if args.dry_run {
        print!("{}", dry_run_plan(&cfg)?);
        return Ok(());
    }
    let outcome = run_pipeline(&cfg)?;
    for (name, stats) in &outcome.report.methods {
        println!("{name}: MPD {:.4} +- {:.4} px", stats.mpd_mean, stats.mpd_std);
    }
    println!("test clips: {}", outcome.test_clips);
    println!("report hash: {}", outcome.report_hash);
    println!("outputs in {}", outcome.out_dir.display());
    Ok(())
}
