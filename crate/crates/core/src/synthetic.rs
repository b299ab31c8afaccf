//! Synthetic planar-scene oracle: textured canvases viewed through known
//! homography trajectories, with analytic ground-truth motion tracks,
//! optional independently moving objects and photometric disturbance.
//!
//! Ground truth is always computed from the generating homographies, never by
//! estimation, so it stays independent of the estimator under test.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::classify::{classify, MotionClass};
use crate::frame::GrayFrame;
use crate::geometry::{
    four_point_from_matrix, matrix_from_four_point, FourPointDelta, FrameGeometry, GeometryError,
    Homography, Point2,
};
use crate::sampling::{compute_sigma, MotionTrack};

/// Canvas reserve the viewport may never enter, in pixels.
const CANVAS_MARGIN: f64 = 16.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("viewport leaves the canvas at frame {frame}")]
    ViewportEscape { frame: usize },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A large textured grayscale canvas sampled by the moving viewport.
#[derive(Debug, Clone)]
pub struct Scene {
    pub canvas: GrayFrame,
    pub seed: u64,
}

/// Deterministic band-limited noise texture with seeded blobs. `size` must
/// be at least 512 so a default viewport has room to move.
pub fn generate_scene(seed: u64, size: u32) -> Scene {
    assert!(size >= 512, "canvas must be at least 512x512");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size as usize;
    let mut acc = vec![0.0f64; n * n];

    // Octaves of bilinearly upsampled coarse noise. The finest octave keeps
    // local patches informative, so matching stays well-conditioned
    // everywhere rather than only at the blobs.
    for (cell, amp) in [(64usize, 0.28), (32, 0.20), (16, 0.15), (8, 0.10), (4, 0.07)] {
        let gw = n / cell + 2;
        let grid: Vec<f64> = (0..gw * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..n {
            let gy = y as f64 / cell as f64;
            let y0 = gy.floor() as usize;
            let fy = gy - y0 as f64;
            for x in 0..n {
                let gx = x as f64 / cell as f64;
                let x0 = gx.floor() as usize;
                let fx = gx - x0 as f64;
                let g00 = grid[y0 * gw + x0];
                let g10 = grid[y0 * gw + x0 + 1];
                let g01 = grid[(y0 + 1) * gw + x0];
                let g11 = grid[(y0 + 1) * gw + x0 + 1];
                let a = g00 + fx * (g10 - g00);
                let b = g01 + fx * (g11 - g01);
                acc[y * n + x] += amp * (a + fy * (b - a));
            }
        }
    }

    let mut pixels: Vec<f32> =
        acc.iter().map(|v| (0.5 + 0.5 * v).clamp(0.02, 0.98) as f32).collect();

    // Sharp blobs guarantee corner-rich structure at every viewport position.
    let blobs = (n / 1024).max(1).pow(2) * 500;
    for _ in 0..blobs {
        let cx = rng.random_range(4.0..(n as f64 - 4.0));
        let cy = rng.random_range(4.0..(n as f64 - 4.0));
        let r = rng.random_range(1.5..4.0);
        let amp = rng.random_range(0.2..0.45) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (x0, x1) = ((cx - r - 1.0).floor() as usize, (cx + r + 1.0).ceil() as usize);
        let (y0, y1) = ((cy - r - 1.0).floor() as usize, (cy + r + 1.0).ceil() as usize);
        for y in y0..=y1.min(n - 1) {
            for x in x0..=x1.min(n - 1) {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < r {
                    let i = y * n + x;
                    let falloff = 1.0 - d / r;
                    pixels[i] = (f64::from(pixels[i]) + amp * falloff).clamp(0.02, 0.98) as f32;
                }
            }
        }
    }

    Scene { canvas: GrayFrame::new(size, size, pixels).expect("valid canvas"), seed }
}

/// Cue-to-direction rule of the cue-conditioned task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueRule {
    /// Cue in the right half means the next motion is Right, else Left.
    Horizontal,
    /// Quadrants map to Left (TL), Right (TR), Up (BL), Down (BR).
    Quadrant,
}

impl CueRule {
    pub fn direction(&self, cue: Point2, frame_center: Point2) -> MotionClass {
        match self {
            CueRule::Horizontal => {
                if cue.x >= frame_center.x {
                    MotionClass::Right
                } else {
                    MotionClass::Left
                }
            }
            CueRule::Quadrant => match (cue.x >= frame_center.x, cue.y >= frame_center.y) {
                (false, false) => MotionClass::Left,
                (true, false) => MotionClass::Right,
                (false, true) => MotionClass::Up,
                (true, true) => MotionClass::Down,
            },
        }
    }
}

/// A bright disk drawn in viewport coordinates (constant screen position
/// while it is shown).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueMarker {
    pub center: Point2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueParams {
    /// Per-frame content displacement during a burst, pixels.
    pub step_px: f64,
    /// Static frames per cycle before the burst.
    pub gap: usize,
    /// Moving frames per cycle.
    pub burst: usize,
    pub rule: CueRule,
    pub cue_radius: f64,
    /// Uniform jitter of the cue around the quadrant center, pixels.
    pub jitter: f64,
}

impl Default for CueParams {
    fn default() -> Self {
        Self {
            step_px: 1.2,
            gap: 5,
            burst: 5,
            rule: CueRule::Quadrant,
            cue_radius: 12.0,
            jitter: 22.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryKind {
    /// Identical per-step content translation.
    ConstantVelocity { velocity: (f64, f64) },
    /// Per-step translation `base + t * increment`.
    LinearAcceleration { base: (f64, f64), increment: (f64, f64) },
    /// Constant speed with a new random direction every `switch_every` steps.
    PiecewiseConstantWithSwitches { speed: f64, switch_every: usize },
    /// Static/burst cycles whose burst direction follows a visible cue.
    CueConditioned(CueParams),
}

/// A per-step homography sequence with the accumulated viewport placement,
/// per-frame cue overlays and per-step construction labels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    steps: Vec<Homography>,
    /// Viewport-to-canvas transform per frame; length = steps + 1.
    accumulated: Vec<Homography>,
    cues: Vec<Option<CueMarker>>,
    step_labels: Vec<Option<MotionClass>>,
}

impl Trajectory {
    /// Builds a trajectory from explicit per-step content homographies,
    /// verifying the viewport stays inside the canvas.
    pub fn from_steps(
        steps: Vec<Homography>,
        geom: &FrameGeometry,
        canvas_size: u32,
    ) -> Result<Self, SynthError> {
        let frames = steps.len() + 1;
        let cues = vec![None; frames];
        let step_labels = vec![None; steps.len()];
        Self::assemble(steps, cues, step_labels, geom, canvas_size)
    }

    fn assemble(
        steps: Vec<Homography>,
        cues: Vec<Option<CueMarker>>,
        step_labels: Vec<Option<MotionClass>>,
        geom: &FrameGeometry,
        canvas_size: u32,
    ) -> Result<Self, SynthError> {
        let o0 = initial_origin(geom, canvas_size);
        let mut accumulated = Vec::with_capacity(steps.len() + 1);
        accumulated.push(Homography::translation(o0.x, o0.y));
        for (t, g) in steps.iter().enumerate() {
            let inv = g.invert().map_err(SynthError::Geometry)?;
            accumulated.push(accumulated[t].compose(&inv));
        }
        for (t, a) in accumulated.iter().enumerate() {
            if !viewport_inside(a, geom, canvas_size) {
                return Err(SynthError::ViewportEscape { frame: t });
            }
        }
        Ok(Self { steps, accumulated, cues, step_labels })
    }

    pub fn frames(&self) -> usize {
        self.accumulated.len()
    }

    /// Per-step content homographies (frame t to t+1 ground truth).
    pub fn steps(&self) -> &[Homography] {
        &self.steps
    }

    pub fn cues(&self) -> &[Option<CueMarker>] {
        &self.cues
    }

    /// Construction label per step: the pure motion class of moving steps.
    pub fn step_labels(&self) -> &[Option<MotionClass>] {
        &self.step_labels
    }

    /// Viewport-to-canvas placement of frame `t`.
    pub fn placement(&self, t: usize) -> &Homography {
        &self.accumulated[t]
    }

    /// Ground-truth motion between frames `n` and `n + dn` (composed steps).
    pub fn composed_motion(&self, n: usize, dn: usize) -> Homography {
        let mut g = self.steps[n];
        for k in 1..dn {
            g = self.steps[n + k].compose(&g);
        }
        g
    }

    /// Analytic ground-truth track at frame increment `dn`.
    pub fn truth_track(
        &self,
        geom: &FrameGeometry,
        dn: usize,
        fps: f64,
        video_id: &str,
    ) -> Result<MotionTrack, SynthError> {
        assert!(dn >= 1 && self.frames() > dn);
        let mut entries = Vec::with_capacity(self.frames() - dn);
        for n in 0..self.frames() - dn {
            let g = self.composed_motion(n, dn);
            entries.push(Some(four_point_from_matrix(&g, geom)?));
        }
        Ok(MotionTrack::new(video_id.to_string(), dn, fps, *geom, entries))
    }
}

fn initial_origin(geom: &FrameGeometry, canvas_size: u32) -> Point2 {
    Point2::new(
        (f64::from(canvas_size) - f64::from(geom.width)) / 2.0,
        (f64::from(canvas_size) - f64::from(geom.height)) / 2.0,
    )
}

fn viewport_inside(placement: &Homography, geom: &FrameGeometry, canvas_size: u32) -> bool {
    let hi = f64::from(canvas_size) - 1.0 - CANVAS_MARGIN;
    geom.corners().iter().all(|p| match placement.project(*p) {
        Ok(c) => c.x >= CANVAS_MARGIN && c.y >= CANVAS_MARGIN && c.x <= hi && c.y <= hi,
        Err(_) => false,
    })
}

fn direction_velocity(class: MotionClass, speed: f64) -> (f64, f64) {
    match class {
        MotionClass::Right => (speed, 0.0),
        MotionClass::Left => (-speed, 0.0),
        MotionClass::Up => (0.0, -speed),
        MotionClass::Down => (0.0, speed),
        _ => unreachable!("cue directions are pure translations"),
    }
}

/// Generates a trajectory of `frames` frames. Cue-conditioned and switching
/// trajectories steer themselves back toward the canvas center when the
/// accumulated drift grows, so long sequences stay in bounds.
pub fn generate_trajectory(
    kind: &TrajectoryKind,
    frames: usize,
    geom: &FrameGeometry,
    canvas_size: u32,
    seed: u64,
) -> Result<Trajectory, SynthError> {
    if frames < 2 {
        return Err(SynthError::BadParams("need at least 2 frames".into()));
    }
    let steps_n = frames - 1;
    let o0 = initial_origin(geom, canvas_size);
    let translation_class = |dx: f64, dy: f64| -> Option<MotionClass> {
        if dx == 0.0 && dy == 0.0 {
            return None;
        }
        Some(classify(
            &FourPointDelta::uniform(dx, dy),
            1e-9,
            geom,
        ))
    };

    match kind {
        TrajectoryKind::ConstantVelocity { velocity: (dx, dy) } => {
            let steps = vec![Homography::translation(*dx, *dy); steps_n];
            let labels = vec![translation_class(*dx, *dy); steps_n];
            Trajectory::assemble(steps, vec![None; frames], labels, geom, canvas_size)
        }
        TrajectoryKind::LinearAcceleration { base: (bx, by), increment: (ix, iy) } => {
            let mut steps = Vec::with_capacity(steps_n);
            let mut labels = Vec::with_capacity(steps_n);
            for t in 0..steps_n {
                let dx = bx + t as f64 * ix;
                let dy = by + t as f64 * iy;
                steps.push(Homography::translation(dx, dy));
                labels.push(translation_class(dx, dy));
            }
            Trajectory::assemble(steps, vec![None; frames], labels, geom, canvas_size)
        }
        TrajectoryKind::PiecewiseConstantWithSwitches { speed, switch_every } => {
            if *switch_every == 0 {
                return Err(SynthError::BadParams("switch_every must be >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut steps = Vec::with_capacity(steps_n);
            let mut origin = o0;
            let center = o0;
            let mut vel = (0.0, 0.0);
            for t in 0..steps_n {
                if t % switch_every == 0 {
                    let drift = origin - center;
                    let angle = if drift.norm() > 120.0 {
                        // Aim the viewport back toward its start. Content
                        // moves opposite to the viewport, so the content
                        // direction equals the drift direction.
                        drift.y.atan2(drift.x) + rng.random_range(-0.4..0.4)
                    } else {
                        rng.random_range(0.0..std::f64::consts::TAU)
                    };
                    vel = (speed * angle.cos(), speed * angle.sin());
                }
                steps.push(Homography::translation(vel.0, vel.1));
                origin = origin - Point2::new(vel.0, vel.1);
            }
            let labels = steps
                .iter()
                .map(|g| {
                    let t = g.rows();
                    translation_class(t[0][2], t[1][2])
                })
                .collect();
            Trajectory::assemble(steps, vec![None; frames], labels, geom, canvas_size)
        }
        TrajectoryKind::CueConditioned(p) => {
            if p.gap == 0 || p.burst == 0 {
                return Err(SynthError::BadParams("gap and burst must be >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cycle = p.gap + p.burst;
            let center = geom.center();
            let quarter = Point2::new(f64::from(geom.width) / 4.0, f64::from(geom.height) / 4.0);
            let mut steps = Vec::with_capacity(steps_n);
            let mut labels = Vec::with_capacity(steps_n);
            let mut cues = vec![None; frames];
            let mut origin = o0;
            let steer = 140.0;

            let mut frame = 0usize;
            while frame < frames {
                // Pick the burst direction, steering back when drifted. The
                // viewport moves opposite to the content, so forcing content
                // along the drift direction pulls the viewport back.
                let drift = origin - o0;
                let forced = if drift.x.abs() >= drift.y.abs() && drift.x < -steer {
                    Some(MotionClass::Left)
                } else if drift.x.abs() >= drift.y.abs() && drift.x > steer {
                    Some(MotionClass::Right)
                } else if drift.y < -steer {
                    Some(MotionClass::Up)
                } else if drift.y > steer {
                    Some(MotionClass::Down)
                } else {
                    None
                };
                let dir = match forced {
                    Some(c) => c,
                    None => match p.rule {
                        CueRule::Horizontal => {
                            if rng.random_bool(0.5) {
                                MotionClass::Right
                            } else {
                                MotionClass::Left
                            }
                        }
                        CueRule::Quadrant => {
                            *[
                                MotionClass::Left,
                                MotionClass::Right,
                                MotionClass::Up,
                                MotionClass::Down,
                            ]
                            .get(rng.random_range(0..4usize))
                            .unwrap()
                        }
                    },
                };
                // Place the cue in the quadrant that encodes `dir`. Jitter is
                // clamped into the quadrant so the rendered cue always
                // replays to `dir` under the rule.
                let (qx, qy) = match (p.rule, dir) {
                    (CueRule::Horizontal, MotionClass::Right) => (1.0, 0.0),
                    (CueRule::Horizontal, _) => (-1.0, 0.0),
                    (CueRule::Quadrant, MotionClass::Left) => (-1.0, -1.0),
                    (CueRule::Quadrant, MotionClass::Right) => (1.0, -1.0),
                    (CueRule::Quadrant, MotionClass::Up) => (-1.0, 1.0),
                    (CueRule::Quadrant, _) => (1.0, 1.0),
                };
                let edge = p.cue_radius + 2.0;
                let interval = |q: f64, mid: f64, size: f64| -> Result<(f64, f64), SynthError> {
                    let (lo, hi) = if q < 0.0 {
                        (edge, mid - 2.0)
                    } else if q > 0.0 {
                        (mid + 2.0, size - edge)
                    } else {
                        (edge, size - edge)
                    };
                    if lo > hi {
                        return Err(SynthError::BadParams(
                            "cue radius too large for the frame quadrants".into(),
                        ));
                    }
                    Ok((lo, hi))
                };
                let (x_lo, x_hi) = interval(qx, center.x, f64::from(geom.width) - 1.0)?;
                let (y_lo, y_hi) = interval(qy, center.y, f64::from(geom.height) - 1.0)?;
                let cue_center = Point2::new(
                    (center.x + qx * quarter.x + rng.random_range(-p.jitter..=p.jitter))
                        .clamp(x_lo, x_hi),
                    (center.y + qy * quarter.y + rng.random_range(-p.jitter..=p.jitter))
                        .clamp(y_lo, y_hi),
                );
                debug_assert_eq!(p.rule.direction(cue_center, center), dir);
                let marker = CueMarker { center: cue_center, radius: p.cue_radius };

                let vel = direction_velocity(dir, p.step_px);
                for k in 0..cycle {
                    let f = frame + k;
                    if f >= frames {
                        break;
                    }
                    cues[f] = Some(marker);
                    if f < steps_n {
                        if k < p.gap {
                            steps.push(Homography::identity());
                            labels.push(None);
                        } else {
                            steps.push(Homography::translation(vel.0, vel.1));
                            labels.push(Some(dir));
                            origin = origin - Point2::new(vel.0, vel.1);
                        }
                    }
                }
                frame += cycle;
            }
            steps.truncate(steps_n);
            labels.truncate(steps_n);
            Trajectory::assemble(steps, cues, labels, geom, canvas_size)
        }
    }
}

/// Independently moving rigid patch composited over the rendered frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    /// Fraction of the frame area covered by the square patch.
    pub area_fraction: f64,
    /// Patch velocity in pixels per frame; the patch bounces at the borders.
    pub velocity: (f64, f64),
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RenderOptions {
    pub object: Option<ObjectSpec>,
    /// Gaussian pixel noise sigma, applied per frame when set.
    pub photometric_noise: Option<f64>,
    pub noise_seed: u64,
}

/// Band-limited patch texture with the same statistics as the scene canvas,
/// so the object does not out-vote the background in corner detection.
fn object_texture(side: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; side * side];
    for (cell, amp) in [(32usize, 0.26), (16, 0.18), (8, 0.12), (4, 0.07)] {
        let gw = side / cell + 2;
        let grid: Vec<f64> = (0..gw * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..side {
            let gy = y as f64 / cell as f64;
            let y0 = gy.floor() as usize;
            let fy = gy - y0 as f64;
            for x in 0..side {
                let gx = x as f64 / cell as f64;
                let x0 = gx.floor() as usize;
                let fx = gx - x0 as f64;
                let g00 = grid[y0 * gw + x0];
                let g10 = grid[y0 * gw + x0 + 1];
                let g01 = grid[(y0 + 1) * gw + x0];
                let g11 = grid[(y0 + 1) * gw + x0 + 1];
                let a = g00 + fx * (g10 - g00);
                let b = g01 + fx * (g11 - g01);
                acc[y * side + x] += amp * (a + fy * (b - a));
            }
        }
    }
    let mut pixels: Vec<f32> =
        acc.iter().map(|v| (0.5 + 0.5 * v).clamp(0.02, 0.98) as f32).collect();
    // Blob density proportional to the scene default (500 per 1024^2).
    let blobs = ((side * side) as f64 * 500.0 / (1024.0 * 1024.0)).ceil() as usize;
    for _ in 0..blobs {
        let cx = rng.random_range(3.0..(side as f64 - 3.0));
        let cy = rng.random_range(3.0..(side as f64 - 3.0));
        let r = rng.random_range(1.5..4.0);
        let amp = rng.random_range(0.2..0.45) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for y in (cy - r) as usize..=((cy + r) as usize).min(side - 1) {
            for x in (cx - r) as usize..=((cx + r) as usize).min(side - 1) {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < r {
                    let i = y * side + x;
                    pixels[i] =
                        (f64::from(pixels[i]) + amp * (1.0 - d / r)).clamp(0.02, 0.98) as f32;
                }
            }
        }
    }
    pixels
}

/// Triangle-wave reflection of `p0 + v*t` into `[0, range]`.
fn bounce(p0: f64, v: f64, t: f64, range: f64) -> f64 {
    if range <= 0.0 {
        return 0.0;
    }
    let u = (p0 + v * t).rem_euclid(2.0 * range);
    if u <= range {
        u
    } else {
        2.0 * range - u
    }
}

/// Renders frame `t` of a trajectory: the canvas seen through the
/// accumulated placement, plus the object patch, cue marker and photometric
/// noise from `options`. Pure in `t`, so frames can render in parallel.
pub fn render_frame(
    scene: &Scene,
    traj: &Trajectory,
    geom: &FrameGeometry,
    options: &RenderOptions,
    t: usize,
) -> Result<GrayFrame, SynthError> {
    let placement = traj.placement(t);
    let (w, h) = (geom.width as usize, geom.height as usize);
    let mut pixels = vec![0.0f32; w * h];
    let rows: Vec<(usize, &mut [f32])> = pixels.chunks_mut(w).enumerate().collect();
    rows.into_par_iter().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let p = Point2::new(x as f64, y as f64);
            // Placements are affine-normalized, so projection cannot fail
            // inside the validated viewport.
            let c = placement.project(p).expect("validated placement");
            *px = scene.canvas.sample_bilinear(c.x, c.y);
        }
    });

    if let Some(obj) = &options.object {
        let area = obj.area_fraction * (w as f64) * (h as f64);
        let side = area.sqrt().round().max(4.0) as usize;
        let tex = object_texture(side, obj.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(obj.seed ^ 0x9e37_79b9);
        let range_x = (w - side) as f64;
        let range_y = (h - side) as f64;
        let p0 = Point2::new(
            rng.random_range(0.0..range_x.max(1.0)),
            rng.random_range(0.0..range_y.max(1.0)),
        );
        let ox = bounce(p0.x, obj.velocity.0, t as f64, range_x);
        let oy = bounce(p0.y, obj.velocity.1, t as f64, range_y);
        let (x0, y0) = (ox.floor() as usize, oy.floor() as usize);
        for y in y0..(y0 + side).min(h) {
            for x in x0..(x0 + side).min(w) {
                let u = x as f64 - ox;
                let v = y as f64 - oy;
                if u >= 0.0 && v >= 0.0 && u < (side - 1) as f64 && v < (side - 1) as f64 {
                    let iu = u.floor() as usize;
                    let iv = v.floor() as usize;
                    let (fu, fv) = ((u - iu as f64) as f32, (v - iv as f64) as f32);
                    let t00 = tex[iv * side + iu];
                    let t10 = tex[iv * side + iu + 1];
                    let t01 = tex[(iv + 1) * side + iu];
                    let t11 = tex[(iv + 1) * side + iu + 1];
                    let a = t00 + fu * (t10 - t00);
                    let b = t01 + fu * (t11 - t01);
                    pixels[y * w + x] = a + fv * (b - a);
                }
            }
        }
    }

    if let Some(cue) = &traj.cues()[t] {
        let r = cue.radius;
        let (x0, x1) = (
            (cue.center.x - r - 1.0).max(0.0) as usize,
            ((cue.center.x + r + 1.0) as usize).min(w - 1),
        );
        let (y0, y1) = (
            (cue.center.y - r - 1.0).max(0.0) as usize,
            ((cue.center.y + r + 1.0) as usize).min(h - 1),
        );
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = (Point2::new(x as f64, y as f64) - cue.center).norm();
                if d < r {
                    // Soft 1.5 px rim, solid bright core.
                    let alpha = ((r - d) / 1.5).clamp(0.0, 1.0) as f32;
                    let i = y * w + x;
                    pixels[i] = pixels[i] * (1.0 - alpha) + 0.98 * alpha;
                }
            }
        }
    }

    if let Some(sigma) = options.photometric_noise {
        let normal = Normal::new(0.0f64, sigma).map_err(|e| SynthError::BadParams(e.to_string()))?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(options.noise_seed ^ (t as u64).wrapping_mul(0x9e37_79b9));
        for px in pixels.iter_mut() {
            *px = (f64::from(*px) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }

    for px in pixels.iter_mut() {
        *px = px.clamp(0.0, 1.0);
    }
    Ok(GrayFrame::new(geom.width, geom.height, pixels).expect("rendered frame in range"))
}

/// A rendered sequence with its analytic truth and per-entry labels.
#[derive(Debug, Clone)]
pub struct RenderedSequence {
    pub frames: Vec<GrayFrame>,
    pub truth: MotionTrack,
    pub labels: Vec<MotionClass>,
    /// Sigma of the truth track used for labeling.
    pub sigma: f64,
}

/// Renders every frame and derives the truth track (at increment `dn`) and
/// labels. Labels share the classify code path used everywhere else.
pub fn render_sequence(
    scene: &Scene,
    traj: &Trajectory,
    geom: &FrameGeometry,
    dn: usize,
    options: &RenderOptions,
    video_id: &str,
) -> Result<RenderedSequence, SynthError> {
    let frames: Result<Vec<GrayFrame>, SynthError> = (0..traj.frames())
        .map(|t| render_frame(scene, traj, geom, options, t))
        .collect();
    let frames = frames?;
    let truth = traj.truth_track(geom, dn, 25.0, video_id)?;
    let (labels, sigma) = label_track(&truth, geom);
    Ok(RenderedSequence { frames, truth, labels, sigma })
}

/// Classifies every truth entry with the track's own sigma (floored to a
/// tiny epsilon so an all-static track still classifies).
pub fn label_track(truth: &MotionTrack, geom: &FrameGeometry) -> (Vec<MotionClass>, f64) {
    let sigma = compute_sigma(std::slice::from_ref(truth)).unwrap_or(0.0).max(1e-9);
    let labels = truth
        .entries()
        .iter()
        .map(|e| classify(e.as_ref().expect("truth tracks are complete"), sigma, geom))
        .collect();
    (labels, sigma)
}

/// Convenience: a frame pair related by a single known homography.
pub fn render_pair(
    scene: &Scene,
    g: &Homography,
    geom: &FrameGeometry,
    options: &RenderOptions,
) -> Result<(GrayFrame, GrayFrame), SynthError> {
    let traj = Trajectory::from_steps(vec![*g], geom, scene.canvas.width())?;
    let a = render_frame(scene, &traj, geom, options, 0)?;
    let b = render_frame(scene, &traj, geom, options, 1)?;
    Ok((a, b))
}

/// Random four-point delta with each displacement uniform in
/// `[-max_disp, max_disp]` per axis.
pub fn random_four_point(rng: &mut ChaCha8Rng, max_disp: f64) -> FourPointDelta {
    let mut flat = [0.0f64; 8];
    for v in flat.iter_mut() {
        *v = rng.random_range(-max_disp..=max_disp);
    }
    FourPointDelta::from_flat(flat).expect("finite")
}

/// Random projective homography with bounded corner displacement.
pub fn random_homography(
    rng: &mut ChaCha8Rng,
    geom: &FrameGeometry,
    max_disp: f64,
) -> Homography {
    loop {
        let d = random_four_point(rng, max_disp);
        if let Ok(h) = matrix_from_four_point(&d, geom) {
            return h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{detect_corners, estimate_motion, match_patches, RansacConfig};

    fn geom() -> FrameGeometry {
        FrameGeometry::new(320, 240)
    }

    #[test]
    fn scene_is_deterministic_per_seed() {
        let a = generate_scene(1, 512);
        let b = generate_scene(1, 512);
        assert_eq!(a.canvas.pixels(), b.canvas.pixels());
        let c = generate_scene(2, 512);
        let sum_a: f64 = a.canvas.pixels().iter().map(|v| f64::from(*v)).sum();
        let sum_c: f64 = c.canvas.pixels().iter().map(|v| f64::from(*v)).sum();
        assert!((sum_a - sum_c).abs() > 1e-6);
    }

    #[test]
    fn scene_has_enough_corners() {
        let scene = generate_scene(3, 1024);
        let traj = Trajectory::from_steps(vec![], &geom(), 1024).unwrap();
        let frame = render_frame(&scene, &traj, &geom(), &RenderOptions::default(), 0).unwrap();
        let corners = detect_corners(&frame, 400, 8.0).unwrap();
        assert!(corners.len() >= 200, "only {} corners", corners.len());
    }

    #[test]
    fn constant_velocity_steps() {
        let kind = TrajectoryKind::ConstantVelocity { velocity: (2.0, 0.0) };
        let traj = generate_trajectory(&kind, 11, &geom(), 1024, 0).unwrap();
        assert_eq!(traj.steps().len(), 10);
        for s in traj.steps() {
            assert_eq!(s.to_flat(), Homography::translation(2.0, 0.0).to_flat());
        }
    }

    #[test]
    fn linear_acceleration_steps() {
        let kind =
            TrajectoryKind::LinearAcceleration { base: (1.0, 0.0), increment: (1.0, 0.0) };
        let traj = generate_trajectory(&kind, 6, &geom(), 1024, 0).unwrap();
        for (t, s) in traj.steps().iter().enumerate() {
            let expect = Homography::translation((t + 1) as f64, 0.0);
            assert_eq!(s.to_flat(), expect.to_flat());
        }
    }

    #[test]
    fn viewport_escape_detected() {
        let kind = TrajectoryKind::ConstantVelocity { velocity: (50.0, 0.0) };
        let r = generate_trajectory(&kind, 40, &geom(), 1024, 0);
        assert!(matches!(r, Err(SynthError::ViewportEscape { .. })));
    }

    #[test]
    fn cue_labels_replay_from_rendered_cues() {
        let params = CueParams { rule: CueRule::Horizontal, ..CueParams::default() };
        let kind = TrajectoryKind::CueConditioned(params);
        let g = geom();
        let traj = generate_trajectory(&kind, 400, &g, 1024, 7).unwrap();
        let center = g.center();
        let mut moving_steps = 0;
        for (t, label) in traj.step_labels().iter().enumerate() {
            if let Some(class) = label {
                let cue = traj.cues()[t].expect("moving step has a visible cue");
                assert_eq!(params.rule.direction(cue.center, center), *class);
                moving_steps += 1;
            }
        }
        assert!(moving_steps > 100);
    }

    #[test]
    fn quadrant_cue_produces_all_four_directions() {
        let kind = TrajectoryKind::CueConditioned(CueParams::default());
        let traj = generate_trajectory(&kind, 2000, &geom(), 1024, 9).unwrap();
        for dir in [MotionClass::Left, MotionClass::Right, MotionClass::Up, MotionClass::Down] {
            assert!(
                traj.step_labels().iter().flatten().any(|c| *c == dir),
                "missing direction {dir:?}"
            );
        }
    }

    #[test]
    fn identity_trajectory_renders_static() {
        let scene = generate_scene(5, 512);
        let g = FrameGeometry::new(128, 96);
        let kind = TrajectoryKind::ConstantVelocity { velocity: (0.0, 0.0) };
        let traj = generate_trajectory(&kind, 4, &g, 512, 0).unwrap();
        let seq =
            render_sequence(&scene, &traj, &g, 1, &RenderOptions::default(), "v").unwrap();
        for f in &seq.frames[1..] {
            assert_eq!(f.pixels(), seq.frames[0].pixels());
        }
        for (_, d) in seq.truth.present_deltas() {
            assert_eq!(d.to_flat(), [0.0; 8]);
        }
        assert!(seq.labels.iter().all(|c| *c == MotionClass::Static));
    }

    #[test]
    fn constant_velocity_truth_is_exact() {
        let g = geom();
        let kind = TrajectoryKind::ConstantVelocity { velocity: (5.0, 0.0) };
        let traj = generate_trajectory(&kind, 8, &g, 1024, 0).unwrap();
        let track = traj.truth_track(&g, 1, 25.0, "v").unwrap();
        for (_, d) in track.present_deltas() {
            assert!(d.max_corner_error(&FourPointDelta::uniform(5.0, 0.0)) < 1e-12);
        }
    }

    #[test]
    fn truth_at_dn_matches_bruteforce_composition() {
        use rand::SeedableRng;
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let steps: Vec<Homography> = (0..12).map(|_| random_homography(&mut rng, &g, 2.0)).collect();
        let traj = Trajectory::from_steps(steps.clone(), &g, 1024).unwrap();
        let track = traj.truth_track(&g, 5, 25.0, "v").unwrap();
        for (n, d) in track.present_deltas() {
            // Brute-force: compose the five per-step matrices explicitly.
            let mut acc = Homography::identity();
            for k in 0..5 {
                acc = steps[n + k].compose(&acc);
            }
            let expect = four_point_from_matrix(&acc, &g).unwrap();
            assert!(d.max_corner_error(&expect) < 1e-9);
        }
    }

    #[test]
    fn matches_follow_known_homography() {
        use rand::SeedableRng;
        let scene = generate_scene(8, 1024);
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = random_homography(&mut rng, &g, 8.0);
        let (a, b) = render_pair(&scene, &h, &g, &RenderOptions::default()).unwrap();
        let pts = detect_corners(&a, 150, 8.0).unwrap();
        let m = match_patches(&a, &b, &pts, 11, 16).unwrap();
        assert!(m.len() >= 40);
        let within: usize = m
            .pairs
            .iter()
            .filter(|(p, q)| (h.project(*p).unwrap() - *q).norm() <= 1.0)
            .count();
        assert!(
            within as f64 >= 0.8 * m.len() as f64,
            "{within} of {} within 1 px",
            m.len()
        );
    }

    #[test]
    fn estimator_fidelity_on_rendered_pair() {
        use rand::SeedableRng;
        let scene = generate_scene(9, 1024);
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..3 {
            let h = random_homography(&mut rng, &g, 12.0);
            let truth = four_point_from_matrix(&h, &g).unwrap();
            let (a, b) = render_pair(&scene, &h, &g, &RenderOptions::default()).unwrap();
            let est = estimate_motion(&a, &b, &RansacConfig::default()).unwrap();
            let err = est.corner_error(&truth);
            assert!(err <= 0.5, "corner error {err}");
        }
    }

    #[test]
    fn object_injection_does_not_disturb_estimate() {
        use rand::SeedableRng;
        let scene = generate_scene(10, 1024);
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let h = random_homography(&mut rng, &g, 8.0);
        let truth = four_point_from_matrix(&h, &g).unwrap();
        let opts = RenderOptions {
            object: Some(ObjectSpec { area_fraction: 0.25, velocity: (3.0, 2.0), seed: 4 }),
            ..RenderOptions::default()
        };
        let (a, b) = render_pair(&scene, &h, &g, &opts).unwrap();
        let est = estimate_motion(&a, &b, &RansacConfig::default()).unwrap();
        let worst = est
            .corners()
            .iter()
            .zip(truth.corners().iter())
            .map(|(x, y)| (*x - *y).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 0.5, "per-corner deviation {worst}");
    }

    #[test]
    fn labels_equal_classify_of_truth() {
        let kind = TrajectoryKind::CueConditioned(CueParams::default());
        let g = geom();
        let traj = generate_trajectory(&kind, 200, &g, 1024, 21).unwrap();
        let scene = generate_scene(22, 512);
        // Small geometry keeps this render cheap; containment still holds.
        let small = FrameGeometry::new(64, 48);
        let traj_small = generate_trajectory(&kind, 60, &small, 512, 21).unwrap();
        let seq =
            render_sequence(&scene, &traj_small, &small, 5, &RenderOptions::default(), "v")
                .unwrap();
        for ((_, d), label) in seq.truth.present_deltas().zip(seq.labels.iter()) {
            assert_eq!(classify(d, seq.sigma, &small), *label);
        }
        // The full-size trajectory also renders a cue on every frame.
        assert!(traj.cues().iter().all(|c| c.is_some()));
    }
}
