//! Pipeline orchestration: dataset discovery, offline track estimation,
//! importance sampling, predictor training and evaluation, wired the same
//! way for the CLI and for tests.
//!
//! Data lives in per-video directories: `frames/` with zero-padded images,
//! `truth.jsonl` (synthetic ground truth) and/or `track.jsonl` (estimated),
//! and optionally `labels.csv`. A directory whose `frames/` exists directly
//! is treated as a single video; otherwise each subdirectory is one video.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::MotionClass;
use crate::estimation::{estimate_motion_with, EstimatorConfig};
use crate::evaluation::{
    center_scatter_svg, center_displacement, evaluate_clips, label_agreement, warp_overlay,
    EvalReport, LabeledPrediction,
};
use crate::frame::{list_frame_files, GrayFrame};
use crate::geometry::FrameGeometry;
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::predictor::{
    train, train_log_to_csv, AugmentationPolicy, DataSample, PredictorInput, TrainConfig,
};
use crate::sampling::{
    compute_sigma, importance_sample, Clip, ClipIndex, ClipSpec, MotionTrack,
};
use crate::synthetic::{
    generate_scene, generate_trajectory, label_track, render_frame, CueParams, CueRule,
    ObjectSpec, RenderOptions, Trajectory, TrajectoryKind,
};

/// Ground-truth track filename written by the synthetic generator.
pub const TRUTH_TRACK: &str = "truth.jsonl";
/// Estimated track filename written by the offline estimation run.
pub const ESTIMATED_TRACK: &str = "track.jsonl";
/// Per-entry label filename (video_id,start_frame,label).
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Unreadable or malformed input; CLI exit code 2.
    #[error("bad input: {0}")]
    BadInput(String),
    /// Data failed a quality gate; CLI exit code 3.
    #[error("quality gate: {0}")]
    QualityGate(String),
    /// Internal failure, annotated with the stage that failed; exit code 1.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: anyhow::Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::BadInput(_) => 2,
            PipelineError::QualityGate(_) => 3,
            PipelineError::Stage { .. } => 1,
        }
    }
}

fn stage<E: Into<anyhow::Error>>(name: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage: name, source: e.into() }
}

/// Resolves the worker count: explicit value, else `HOMOFLOW_THREADS`, else
/// all cores.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("HOMOFLOW_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|t| *t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

fn with_pool<T: Send>(threads: usize, op: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(op)
}

/// One video directory with its frame files.
#[derive(Debug, Clone)]
pub struct VideoDir {
    pub id: String,
    pub dir: PathBuf,
    pub frame_files: Vec<PathBuf>,
}

impl VideoDir {
    pub fn frames_dir(&self) -> PathBuf {
        self.dir.join("frames")
    }

    pub fn track_path(&self, use_truth: bool) -> PathBuf {
        self.dir.join(if use_truth { TRUTH_TRACK } else { ESTIMATED_TRACK })
    }

    pub fn labels_path(&self) -> PathBuf {
        self.dir.join(LABELS_FILE)
    }

    pub fn load_frame(&self, idx: usize) -> Result<GrayFrame, PipelineError> {
        let path = self.frame_files.get(idx).ok_or_else(|| {
            PipelineError::BadInput(format!("frame index {idx} out of range for {}", self.id))
        })?;
        GrayFrame::load(path).map_err(|e| PipelineError::BadInput(e.to_string()))
    }
}

/// Finds the videos under `root`: either `root` itself (when `root/frames`
/// exists) or every subdirectory with a `frames/` directory.
pub fn discover_videos(root: &Path) -> Result<Vec<VideoDir>, PipelineError> {
    let video_from = |dir: PathBuf| -> Result<VideoDir, PipelineError> {
        let frames = list_frame_files(&dir.join("frames"))
            .map_err(|e| PipelineError::BadInput(e.to_string()))?;
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".to_string());
        Ok(VideoDir { id, dir, frame_files: frames })
    };
    if root.join("frames").is_dir() {
        return Ok(vec![video_from(root.to_path_buf())?]);
    }
    let rd = std::fs::read_dir(root)
        .map_err(|e| PipelineError::BadInput(format!("cannot read {}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("frames").is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::BadInput(format!(
            "no video directories (containing frames/) under {}",
            root.display()
        )));
    }
    dirs.into_iter().map(video_from).collect()
}

fn mix_seed(base: u64, n: usize) -> u64 {
    let mut h = base ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^ (h >> 31)
}

/// Offline estimation run over a frame directory: one track entry per index,
/// missing where the estimator failed. Pairs are processed in parallel with
/// per-pair seeds, so the thread count never changes the result.
pub fn estimate_track(
    video: &VideoDir,
    dn: usize,
    cfg: &EstimatorConfig,
    fps: f64,
) -> Result<MotionTrack, PipelineError> {
    let count = video.frame_files.len();
    if count < dn + 1 {
        return Err(PipelineError::BadInput(format!(
            "video {} has {count} frames, need at least {}",
            video.id,
            dn + 1
        )));
    }
    let first = video.load_frame(0)?;
    let geom = first.geometry();
    let entries: Vec<Option<crate::geometry::FourPointDelta>> = (0..count - dn)
        .into_par_iter()
        .map(|n| {
            let a = video.load_frame(n).ok()?;
            let b = video.load_frame(n + dn).ok()?;
            let mut pair_cfg = *cfg;
            pair_cfg.ransac.seed = mix_seed(cfg.ransac.seed, n);
            estimate_motion_with(&a, &b, &pair_cfg).ok()
        })
        .collect();
    let missing = entries.iter().filter(|e| e.is_none()).count();
    if missing * 2 > entries.len() {
        return Err(PipelineError::QualityGate(format!(
            "{missing} of {} motion estimates missing (more than half)",
            entries.len()
        )));
    }
    Ok(MotionTrack::new(video.id.clone(), dn, fps, geom, entries))
}

/// Builds predictor samples for one video's clips: recall frames are
/// downsampled once per frame index and shared across overlapping clips.
pub fn build_samples(
    video: &VideoDir,
    track: &MotionTrack,
    clips: &[Clip],
    downsample: (u32, u32),
) -> Result<Vec<(Clip, DataSample)>, PipelineError> {
    let needed: BTreeSet<usize> = clips
        .iter()
        .flat_map(|c| c.recall_frame_indices())
        .collect();
    let needed: Vec<usize> = needed.into_iter().collect();
    let loaded: Vec<(usize, GrayFrame)> = needed
        .par_iter()
        .map(|idx| {
            let f = video.load_frame(*idx)?;
            Ok((*idx, f.downsample(downsample.0, downsample.1)))
        })
        .collect::<Result<_, PipelineError>>()?;
    let cache: BTreeMap<usize, GrayFrame> = loaded.into_iter().collect();

    clips
        .iter()
        .map(|clip| {
            let recall_frames: Vec<GrayFrame> = clip
                .recall_frame_indices()
                .iter()
                .map(|i| cache[i].clone())
                .collect();
            let recall_motions = clip
                .recall_motion_indices()
                .iter()
                .map(|i| {
                    track.entry(*i).copied().ok_or_else(|| {
                        PipelineError::BadInput(format!(
                            "clip at {} references missing motion {i}",
                            clip.start
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let target = clip
                .preview_motion_indices()
                .iter()
                .map(|i| {
                    track.entry(*i).copied().ok_or_else(|| {
                        PipelineError::BadInput(format!(
                            "clip at {} references missing target {i}",
                            clip.start
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((
                clip.clone(),
                DataSample {
                    input: PredictorInput {
                        recall_frames,
                        recall_motions,
                        geom: track.geometry,
                    },
                    target,
                },
            ))
        })
        .collect()
}

/// Reads a `video_id,start_frame,label` CSV into a lookup map.
pub fn load_labels(path: &Path) -> Result<BTreeMap<(String, usize), MotionClass>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::BadInput(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("video_id")) {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(video), Some(start), Some(label)) =
            (parts.next(), parts.next(), parts.next())
        else {
            return Err(PipelineError::BadInput(format!(
                "{}:{}: expected video_id,start_frame,label",
                path.display(),
                lineno + 1
            )));
        };
        let start: usize = start.trim().parse().map_err(|_| {
            PipelineError::BadInput(format!("{}:{}: bad frame index", path.display(), lineno + 1))
        })?;
        let class = MotionClass::from_name(label.trim()).ok_or_else(|| {
            PipelineError::BadInput(format!(
                "{}:{}: unknown label {label}",
                path.display(),
                lineno + 1
            ))
        })?;
        out.insert((video.trim().to_string(), start), class);
    }
    Ok(out)
}

pub fn save_labels(
    path: &Path,
    video_id: &str,
    labels: &[MotionClass],
) -> Result<(), PipelineError> {
    let mut s = String::from("video_id,start_frame,label\n");
    for (n, class) in labels.iter().enumerate() {
        s.push_str(&format!("{video_id},{n},{}\n", class.name()));
    }
    std::fs::write(path, s)
        .map_err(|e| PipelineError::BadInput(format!("cannot write {}: {e}", path.display())))
}

/// Synthetic dataset generation parameters (the `synth gen` command and the
/// pipeline's `data.generate` block).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthGenConfig {
    pub kind: SynthKind,
    pub frames: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub canvas_size: u32,
    /// Truth track frame increment.
    pub dn: usize,
    pub object_area: Option<f64>,
    pub photometric_noise: Option<f64>,
}

impl Default for SynthGenConfig {
    fn default() -> Self {
        Self {
            kind: SynthKind::default(),
            frames: 3000,
            seed: 0,
            width: 320,
            height: 240,
            canvas_size: 1024,
            dn: 5,
            object_area: None,
            photometric_noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SynthKind {
    Cue {
        #[serde(default)]
        rule: CueRuleConfig,
        #[serde(default = "default_step_px")]
        step_px: f64,
        #[serde(default = "default_gap")]
        gap: usize,
        #[serde(default = "default_burst")]
        burst: usize,
    },
    ConstantVelocity { vx: f64, vy: f64 },
    LinearAcceleration { bx: f64, by: f64, ix: f64, iy: f64 },
    Switches { speed: f64, every: usize },
}

fn default_step_px() -> f64 {
    1.2
}
fn default_gap() -> usize {
    5
}
fn default_burst() -> usize {
    5
}

impl Default for SynthKind {
    fn default() -> Self {
        SynthKind::Cue {
            rule: CueRuleConfig::Quadrant,
            step_px: default_step_px(),
            gap: default_gap(),
            burst: default_burst(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CueRuleConfig {
    Horizontal,
    #[default]
    Quadrant,
}

impl From<CueRuleConfig> for CueRule {
    fn from(c: CueRuleConfig) -> CueRule {
        match c {
            CueRuleConfig::Horizontal => CueRule::Horizontal,
            CueRuleConfig::Quadrant => CueRule::Quadrant,
        }
    }
}

impl SynthGenConfig {
    pub fn trajectory_kind(&self) -> TrajectoryKind {
        match &self.kind {
            SynthKind::Cue { rule, step_px, gap, burst } => {
                TrajectoryKind::CueConditioned(CueParams {
                    step_px: *step_px,
                    gap: *gap,
                    burst: *burst,
                    rule: (*rule).into(),
                    ..CueParams::default()
                })
            }
            SynthKind::ConstantVelocity { vx, vy } => {
                TrajectoryKind::ConstantVelocity { velocity: (*vx, *vy) }
            }
            SynthKind::LinearAcceleration { bx, by, ix, iy } => {
                TrajectoryKind::LinearAcceleration { base: (*bx, *by), increment: (*ix, *iy) }
            }
            SynthKind::Switches { speed, every } => {
                TrajectoryKind::PiecewiseConstantWithSwitches {
                    speed: *speed,
                    switch_every: *every,
                }
            }
        }
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            object: self.object_area.map(|area_fraction| ObjectSpec {
                area_fraction,
                velocity: (2.5, 1.5),
                seed: self.seed ^ 0x0b1ec7,
            }),
            photometric_noise: self.photometric_noise,
            noise_seed: self.seed ^ 0x4015e,
        }
    }
}

/// Renders a synthetic video into `out_dir` (frames/, truth.jsonl,
/// labels.csv) and returns the trajectory.
pub fn cmd_synth_gen(cfg: &SynthGenConfig, out_dir: &Path) -> Result<Trajectory, PipelineError> {
    let geom = FrameGeometry::new(cfg.width, cfg.height);
    let scene = generate_scene(cfg.seed, cfg.canvas_size);
    let kind = cfg.trajectory_kind();
    let traj = generate_trajectory(&kind, cfg.frames, &geom, cfg.canvas_size, cfg.seed ^ 0x7a73)
        .map_err(stage("synth"))?;
    let frames_dir = out_dir.join("frames");
    std::fs::create_dir_all(&frames_dir)
        .map_err(|e| PipelineError::BadInput(format!("cannot create {}: {e}", frames_dir.display())))?;
    let options = cfg.render_options();
    let video_id = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".to_string());

    let results: Result<Vec<()>, PipelineError> = (0..traj.frames())
        .into_par_iter()
        .map(|t| {
            let frame = render_frame(&scene, &traj, &geom, &options, t).map_err(stage("render"))?;
            frame
                .save(&frames_dir.join(format!("{t:06}.png")))
                .map_err(|e| PipelineError::BadInput(e.to_string()))
        })
        .collect();
    results?;

    let truth = traj
        .truth_track(&geom, cfg.dn, 25.0, &video_id)
        .map_err(stage("truth"))?;
    truth
        .save_jsonl(&out_dir.join(TRUTH_TRACK))
        .map_err(|e| PipelineError::BadInput(e.to_string()))?;
    let (labels, _) = label_track(&truth, &geom);
    save_labels(&out_dir.join(LABELS_FILE), &video_id, &labels)?;
    Ok(traj)
}

/// Full pipeline configuration (JSON file; flags override).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub estimator: EstimatorConfig,
    pub sampling: SamplingConfig,
    pub split: SplitConfig,
    pub augmentation: AugmentationPolicy,
    pub train: TrainConfig,
    /// Predictor input resolution.
    pub downsample: (u32, u32),
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
    /// Worker threads; never part of the report echo.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            estimator: EstimatorConfig::default(),
            sampling: SamplingConfig::default(),
            split: SplitConfig::default(),
            augmentation: AugmentationPolicy::default(),
            train: TrainConfig::default(),
            downsample: (32, 32),
            eval: EvalConfig::default(),
            out_dir: PathBuf::from("out"),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DataConfig {
    pub dir: PathBuf,
    /// Generate a synthetic video into `dir` when it has no frames yet.
    pub generate: Option<SynthGenConfig>,
    /// Read truth.jsonl instead of estimating track.jsonl.
    pub use_truth_track: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub n: usize,
    pub m: usize,
    pub dn: usize,
    pub dc: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { n: 14, m: 1, dn: 5, dc: 5, count: usize::MAX, seed: 0 }
    }
}

impl SamplingConfig {
    pub fn clip_spec(&self) -> Result<ClipSpec, PipelineError> {
        ClipSpec::new(self.n, self.m, self.dn, self.dc)
            .map_err(|e| PipelineError::BadInput(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.6, val: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvalConfig {
    /// Explicit label file; per-video labels.csv files are found without it.
    pub labels: Option<PathBuf>,
    /// Number of test clips to render warp overlays for.
    pub overlays: usize,
    pub scatter_svg: bool,
}

pub struct PipelineOutcome {
    pub report: EvalReport,
    pub report_hash: String,
    pub out_dir: PathBuf,
    pub test_clips: usize,
}

/// Temporal split per video: the earliest clips train, then validation,
/// then test.
fn split_samples(
    items: Vec<(Clip, DataSample)>,
    split: &SplitConfig,
) -> (Vec<(Clip, DataSample)>, Vec<(Clip, DataSample)>, Vec<(Clip, DataSample)>) {
    let mut by_video: BTreeMap<String, Vec<(Clip, DataSample)>> = BTreeMap::new();
    for item in items {
        by_video.entry(item.0.video_id.clone()).or_default().push(item);
    }
    let (mut train_set, mut val_set, mut test_set) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut clips) in by_video {
        clips.sort_by_key(|(c, _)| c.start);
        let n = clips.len();
        let n_train = (n as f64 * split.train).floor() as usize;
        let n_val = (n as f64 * split.val).floor() as usize;
        for (i, item) in clips.into_iter().enumerate() {
            if i < n_train {
                train_set.push(item);
            } else if i < n_train + n_val {
                val_set.push(item);
            } else {
                test_set.push(item);
            }
        }
    }
    (train_set, val_set, test_set)
}

/// The full Fig-1-style run: (optional) synthesis, offline estimation,
/// sigma, importance sampling, split, training with online augmentation,
/// and evaluation against both Taylor baselines. Fails fast with the stage
/// name. Deterministic for fixed seeds regardless of the thread count.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let threads = resolve_threads(cfg.threads);
    with_pool(threads, || run_pipeline_inner(cfg))
}

fn run_pipeline_inner(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::BadInput(format!("cannot create out dir: {e}")))?;

    // Echo without execution details so report hashes are thread-invariant.
    let mut echo_cfg = cfg.clone();
    echo_cfg.threads = None;
    let config_echo = serde_json::to_value(&echo_cfg).expect("config serializes");
    let mut manifest = ManifestBuilder::new("pipeline", config_echo.clone());
    manifest
        .seed("sampling", cfg.sampling.seed)
        .seed("train", cfg.train.seed)
        .seed("augmentation", cfg.augmentation.seed)
        .seed("estimator", cfg.estimator.ransac.seed);

    // Stage: data.
    if let Some(gen) = &cfg.data.generate {
        if !cfg.data.dir.join("frames").is_dir() {
            cmd_synth_gen(gen, &cfg.data.dir)?;
        }
    }
    let videos = discover_videos(&cfg.data.dir)?;

    // Stage: tracks.
    let spec = cfg.sampling.clip_spec()?;
    let mut tracks: Vec<MotionTrack> = Vec::with_capacity(videos.len());
    for video in &videos {
        let path = video.track_path(cfg.data.use_truth_track);
        let track = if path.is_file() {
            MotionTrack::load_jsonl(&path).map_err(stage("tracks"))?
        } else if cfg.data.use_truth_track {
            return Err(PipelineError::BadInput(format!(
                "missing {} for video {}",
                path.display(),
                video.id
            )));
        } else {
            let track = estimate_track(video, cfg.sampling.dn, &cfg.estimator, 25.0)?;
            track.save_jsonl(&path).map_err(stage("tracks"))?;
            track
        };
        if track.dn != cfg.sampling.dn {
            return Err(PipelineError::BadInput(format!(
                "track {} has dn {} but the run needs dn {}",
                path.display(),
                track.dn,
                cfg.sampling.dn
            )));
        }
        manifest.input(&path);
        tracks.push(track);
    }

    // Stage: sigma + importance sampling.
    let sigma = compute_sigma(&tracks).map_err(stage("sigma"))?;
    let mut all_clips: Vec<Clip> = Vec::new();
    for track in &tracks {
        match importance_sample(track, sigma, &spec, cfg.sampling.count, cfg.sampling.seed) {
            Ok(mut clips) => all_clips.append(&mut clips),
            Err(crate::sampling::SamplingError::NoCandidates) => {}
            Err(e) => return Err(stage("sample")(e)),
        }
    }
    if all_clips.is_empty() {
        return Err(PipelineError::QualityGate(
            "importance sampling produced no clips".into(),
        ));
    }
    let clip_index = ClipIndex::from_clips(spec, sigma, &all_clips);
    let clips_path = cfg.out_dir.join("clips.json");
    clip_index.save(&clips_path).map_err(stage("sample"))?;
    manifest.output(&clips_path);

    // Stage: dataset assembly.
    let mut items: Vec<(Clip, DataSample)> = Vec::new();
    for (video, track) in videos.iter().zip(tracks.iter()) {
        let of_video: Vec<Clip> = all_clips
            .iter()
            .filter(|c| c.video_id == video.id)
            .cloned()
            .collect();
        items.extend(build_samples(video, track, &of_video, cfg.downsample)?);
    }
    let (train_items, val_items, test_items) = split_samples(items, &cfg.split);
    if train_items.is_empty() || test_items.is_empty() {
        return Err(PipelineError::QualityGate(format!(
            "split produced {} train / {} val / {} test clips",
            train_items.len(),
            val_items.len(),
            test_items.len()
        )));
    }

    // Stage: training.
    let train_samples: Vec<DataSample> = train_items.iter().map(|(_, s)| s.clone()).collect();
    let val_samples: Vec<DataSample> = val_items.iter().map(|(_, s)| s.clone()).collect();
    let (model, log) =
        train(&train_samples, &val_samples, &cfg.train, &cfg.augmentation).map_err(stage("train"))?;
    let model_path = cfg.out_dir.join("model.json");
    model.save(&model_path).map_err(stage("train"))?;
    std::fs::write(cfg.out_dir.join("loss_log.csv"), train_log_to_csv(&log))
        .map_err(stage("train"))?;
    manifest.output(&model_path);

    // Stage: evaluation.
    let (methods, per_clip) = evaluate_clips(&test_items, Some(&model)).map_err(stage("eval"))?;

    let labels = {
        let mut map = BTreeMap::new();
        if let Some(path) = &cfg.eval.labels {
            map.extend(load_labels(path)?);
        } else {
            for video in &videos {
                let p = video.labels_path();
                if p.is_file() {
                    map.extend(load_labels(&p)?);
                }
            }
        }
        map
    };
    let agreement = if labels.is_empty() {
        None
    } else {
        // Label lookup is by the frame index where the labeled motion
        // starts: the clip's first preview motion.
        let mut preds: Vec<LabeledPrediction> = Vec::new();
        let mut lookup: BTreeMap<(String, usize), MotionClass> = BTreeMap::new();
        let inputs: Vec<PredictorInput> =
            test_items.iter().map(|(_, s)| s.input.clone()).collect();
        let model_preds = model
            .forward_many(&inputs)
            .map_err(|e| stage("eval")(anyhow::anyhow!(e.to_string())))?;
        for ((clip, _), pred) in test_items.iter().zip(model_preds.into_iter()) {
            let target_index = clip.preview_motion_indices()[0];
            let key = (clip.video_id.clone(), target_index);
            if let Some(class) = labels.get(&key) {
                if matches!(
                    class,
                    MotionClass::Up | MotionClass::Down | MotionClass::Left | MotionClass::Right
                ) {
                    lookup.insert((clip.video_id.clone(), clip.start), *class);
                    preds.push(LabeledPrediction {
                        video_id: clip.video_id.clone(),
                        start: clip.start,
                        pred,
                    });
                }
            }
        }
        if preds.is_empty() {
            None
        } else {
            let geom = tracks[0].geometry;
            if cfg.eval.scatter_svg {
                let pts: Vec<((f64, f64), MotionClass)> = preds
                    .iter()
                    .map(|p| {
                        let cd = center_displacement(&p.pred[0], &geom).unwrap_or((0.0, 0.0));
                        (cd, lookup[&(p.video_id.clone(), p.start)])
                    })
                    .collect();
                std::fs::write(cfg.out_dir.join("center_scatter.svg"), center_scatter_svg(&pts))
                    .map_err(stage("eval"))?;
            }
            Some(label_agreement(&preds, &lookup, &geom).map_err(stage("eval"))?)
        }
    };

    let report = EvalReport { config: config_echo, methods, per_clip, label_agreement: agreement };
    let report_dir = cfg.out_dir.join("report");
    report.save(&report_dir).map_err(stage("eval"))?;

    if cfg.eval.overlays > 0 {
        let overlay_dir = cfg.out_dir.join("overlays");
        std::fs::create_dir_all(&overlay_dir).map_err(stage("eval"))?;
        for (clip, sample) in test_items.iter().take(cfg.eval.overlays) {
            let video = videos.iter().find(|v| v.id == clip.video_id).expect("video exists");
            let past = video.load_frame(clip.recall_end_frame())?;
            let current = video.load_frame(clip.recall_end_frame() + clip.spec.dn)?;
            let pred = model
                .forward(&sample.input)
                .map_err(|e| stage("eval")(anyhow::anyhow!(e.to_string())))?;
            let overlay = warp_overlay(&past, &current, &pred[0]).map_err(stage("eval"))?;
            overlay
                .save_png(&overlay_dir.join(format!(
                    "{}_{:06}_model.png",
                    clip.video_id,
                    clip.recall_end_frame()
                )))
                .map_err(stage("eval"))?;
        }
    }

    let report_hash = report.content_hash();
    std::fs::write(cfg.out_dir.join("report_hash.txt"), &report_hash).map_err(stage("eval"))?;
    let manifest = manifest.finish();
    manifest
        .save(&manifest_path(&cfg.out_dir))
        .map_err(stage("manifest"))?;

    Ok(PipelineOutcome {
        report,
        report_hash,
        out_dir: cfg.out_dir.clone(),
        test_clips: test_items.len(),
    })
}

/// Validates a pipeline config and describes the planned stages without
/// touching any outputs.
pub fn dry_run_plan(cfg: &PipelineConfig) -> Result<String, PipelineError> {
    let spec = cfg.sampling.clip_spec()?;
    if cfg.split.train <= 0.0 || cfg.split.train + cfg.split.val >= 1.0 {
        return Err(PipelineError::BadInput(
            "split fractions must satisfy 0 < train and train + val < 1".into(),
        ));
    }
    let mut s = String::new();
    s.push_str(&format!("data dir: {}\n", cfg.data.dir.display()));
    if let Some(gen) = &cfg.data.generate {
        s.push_str(&format!(
            "generate: {} frames of {:?} (seed {})\n",
            gen.frames, gen.kind, gen.seed
        ));
    }
    s.push_str(&format!(
        "tracks: {} (dn {})\n",
        if cfg.data.use_truth_track { "truth" } else { "estimated" },
        cfg.sampling.dn
    ));
    s.push_str(&format!(
        "clips: N={} M={} dn={} dc={} count={}\n",
        spec.n_recall,
        spec.m_preview,
        spec.dn,
        spec.dc,
        if cfg.sampling.count == usize::MAX {
            "all".to_string()
        } else {
            cfg.sampling.count.to_string()
        }
    ))        ;
    s.push_str(&format!(
        "split: train {:.0}% / val {:.0}% / test {:.0}%\n",
        cfg.split.train * 100.0,
        cfg.split.val * 100.0,
        (1.0 - cfg.split.train - cfg.split.val) * 100.0
    ));
    s.push_str(&format!(
        "train: {} epochs, batch {}, lr {}, lambda {}, hidden {:?}\n",
        cfg.train.epochs,
        cfg.train.batch_size,
        cfg.train.learning_rate,
        cfg.train.lambda,
        cfg.train.hidden_dims
    ));
    s.push_str(&format!("out dir: {}\n", cfg.out_dir.display()));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![MotionClass::Static, MotionClass::Right, MotionClass::Mixed];
        save_labels(&path, "vid", &labels).unwrap();
        let map = load_labels(&path).unwrap();
        assert_eq!(map.len(), 3);
        assert_eq!(map[&("vid".to_string(), 1)], MotionClass::Right);
    }

    #[test]
    fn discover_rejects_empty_roots() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            discover_videos(dir.path()),
            Err(PipelineError::BadInput(_))
        ));
    }

    #[test]
    fn split_is_temporal_per_video() {
        use crate::geometry::FourPointDelta;
        let spec = ClipSpec { n_recall: 2, m_preview: 1, dn: 1, dc: 1 };
        let mk = |start: usize| {
            (
                Clip { video_id: "v".into(), start, spec },
                DataSample {
                    input: PredictorInput {
                        recall_frames: vec![GrayFrame::filled(4, 4, 0.1); 2],
                        recall_motions: vec![FourPointDelta::zero()],
                        geom: FrameGeometry::new(320, 240),
                    },
                    target: vec![FourPointDelta::zero()],
                },
            )
        };
        let items: Vec<_> = (0..10).map(mk).collect();
        let (tr, va, te) = split_samples(items, &SplitConfig { train: 0.6, val: 0.2 });
        assert_eq!(tr.len(), 6);
        assert_eq!(va.len(), 2);
        assert_eq!(te.len(), 2);
        assert!(tr.iter().all(|(c, _)| c.start < 6));
        assert!(te.iter().all(|(c, _)| c.start >= 8));
    }

    #[test]
    fn dry_run_validates() {
        let mut cfg = PipelineConfig::default();
        cfg.split.train = 0.9;
        cfg.split.val = 0.2;
        assert!(matches!(dry_run_plan(&cfg), Err(PipelineError::BadInput(_))));
        cfg.split = SplitConfig::default();
        let plan = dry_run_plan(&cfg).unwrap();
        assert!(plan.contains("clips: N=14 M=1 dn=5 dc=5"));
    }
}
