//! Metrics and reports: mean pairwise distance against the baselines,
//! center-point displacement against motion-class labels, warp-overlay
//! rendering, and the estimator timing harness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::MotionClass;
use crate::estimation::EstimationError;
use crate::frame::GrayFrame;
use crate::geometry::{
    matrix_from_four_point, FourPointDelta, FrameGeometry, GeometryError, Point2,
};
use crate::predictor::{loss, taylor_o1, taylor_o2, DataSample, PredictorModel};
use crate::sampling::Clip;

/// Center displacements smaller than this (normalized units) carry no
/// dominant axis and count as abstentions.
pub const DOMINANCE_DEAD_ZONE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty evaluation set")]
    EmptySet,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mean and population standard deviation of the per-sample mean pairwise
/// distance between predictions and targets, in pixels.
pub fn mpd(
    preds: &[Vec<FourPointDelta>],
    targets: &[Vec<FourPointDelta>],
) -> Result<(f64, f64), EvalError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(EvalError::EmptySet);
    }
    let values: Vec<f64> =
        preds.iter().zip(targets.iter()).map(|(p, t)| loss(p, t, 0.0)).collect();
    Ok(mean_std(&values))
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Motion of the image center under the delta's homography, scaled per axis
/// to `[-1, 1]` by the half frame size.
pub fn center_displacement(
    d: &FourPointDelta,
    geom: &FrameGeometry,
) -> Result<(f64, f64), EvalError> {
    let g = matrix_from_four_point(d, geom)?;
    let c = geom.center();
    let moved = g.project(c)?;
    let half_w = (f64::from(geom.width) - 1.0) / 2.0;
    let half_h = (f64::from(geom.height) - 1.0) / 2.0;
    Ok(((moved.x - c.x) / half_w, (moved.y - c.y) / half_h))
}

/// One clip's predicted preview motion, addressed by (video, start).
#[derive(Debug, Clone)]
pub struct LabeledPrediction {
    pub video_id: String,
    pub start: usize,
    pub pred: Vec<FourPointDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAgreement {
    pub count: usize,
    pub abstentions: usize,
    /// Fraction of decided clips whose dominant axis and sign match; absent
    /// when every clip abstained.
    pub agreement: Option<f64>,
    pub mean_x: f64,
    pub mean_y: f64,
    pub quartiles_x: (f64, f64, f64),
    pub quartiles_y: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_class: BTreeMap<String, ClassAgreement>,
    pub overall_agreement: Option<f64>,
    pub abstentions: usize,
    /// True when a single global sign flip of the displacements was applied
    /// (and improved agreement).
    pub negated: bool,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let f = pos - lo as f64;
        sorted[lo] * (1.0 - f) + sorted[hi] * f
    }
}

fn matches_label(cd: (f64, f64), label: MotionClass) -> Option<bool> {
    let (x, y) = cd;
    if x.abs().max(y.abs()) < DOMINANCE_DEAD_ZONE {
        return None;
    }
    let horizontal = x.abs() >= y.abs();
    Some(match label {
        MotionClass::Right => horizontal && x > 0.0,
        MotionClass::Left => horizontal && x < 0.0,
        MotionClass::Up => !horizontal && y < 0.0,
        MotionClass::Down => !horizontal && y > 0.0,
        _ => unreachable!("labels restricted to the four directions"),
    })
}

fn agreement_with_sign(
    displacements: &[((f64, f64), MotionClass)],
    negate: bool,
) -> (usize, usize) {
    let mut matched = 0usize;
    let mut decided = 0usize;
    for ((x, y), label) in displacements {
        let cd = if negate { (-x, -y) } else { (*x, *y) };
        if let Some(ok) = matches_label(cd, *label) {
            decided += 1;
            if ok {
                matched += 1;
            }
        }
    }
    (matched, decided)
}

/// Per-label center-displacement statistics and the dominant-axis agreement
/// score. A single global negation may be applied when it improves the
/// score; the report says so.
pub fn label_agreement(
    predictions: &[LabeledPrediction],
    labels: &BTreeMap<(String, usize), MotionClass>,
    geom: &FrameGeometry,
) -> Result<AgreementReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut displacements: Vec<((f64, f64), MotionClass)> = Vec::with_capacity(predictions.len());
    for p in predictions {
        let label = labels
            .get(&(p.video_id.clone(), p.start))
            .copied()
            .ok_or_else(|| {
                EvalError::LabelMismatch(format!("no label for {}:{}", p.video_id, p.start))
            })?;
        if !matches!(
            label,
            MotionClass::Up | MotionClass::Down | MotionClass::Left | MotionClass::Right
        ) {
            return Err(EvalError::LabelMismatch(format!(
                "label {} is not a pure direction",
                label.name()
            )));
        }
        let first = p.pred.first().ok_or(EvalError::EmptySet)?;
        displacements.push((center_displacement(first, geom)?, label));
    }

    let (m_plain, d_plain) = agreement_with_sign(&displacements, false);
    let (m_neg, d_neg) = agreement_with_sign(&displacements, true);
    let score = |m: usize, d: usize| if d > 0 { m as f64 / d as f64 } else { -1.0 };
    let negated = score(m_neg, d_neg) > score(m_plain, d_plain);
    if negated {
        for (cd, _) in displacements.iter_mut() {
            *cd = (-cd.0, -cd.1);
        }
    }

    let mut per_class = BTreeMap::new();
    for class in [MotionClass::Up, MotionClass::Down, MotionClass::Left, MotionClass::Right] {
        let of_class: Vec<&((f64, f64), MotionClass)> =
            displacements.iter().filter(|(_, l)| *l == class).collect();
        if of_class.is_empty() {
            continue;
        }
        let mut xs: Vec<f64> = of_class.iter().map(|((x, _), _)| *x).collect();
        let mut ys: Vec<f64> = of_class.iter().map(|((_, y), _)| *y).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mut matched = 0usize;
        let mut decided = 0usize;
        for (cd, label) in &of_class {
            if let Some(ok) = matches_label(*cd, *label) {
                decided += 1;
                if ok {
                    matched += 1;
                }
            }
        }
        per_class.insert(
            class.name().to_string(),
            ClassAgreement {
                count: of_class.len(),
                abstentions: of_class.len() - decided,
                agreement: (decided > 0).then(|| matched as f64 / decided as f64),
                mean_x: xs.iter().sum::<f64>() / xs.len() as f64,
                mean_y: ys.iter().sum::<f64>() / ys.len() as f64,
                quartiles_x: (quantile(&xs, 0.25), quantile(&xs, 0.5), quantile(&xs, 0.75)),
                quartiles_y: (quantile(&ys, 0.25), quantile(&ys, 0.5), quantile(&ys, 0.75)),
            },
        );
    }
    let (matched, decided) = agreement_with_sign(&displacements, false);
    Ok(AgreementReport {
        per_class,
        overall_agreement: (decided > 0).then(|| matched as f64 / decided as f64),
        abstentions: displacements.len() - decided,
        negated,
    })
}

/// SVG scatter of per-clip center displacements colored by label.
pub fn center_scatter_svg(
    displacements: &[((f64, f64), MotionClass)],
) -> String {
    let size = 420.0;
    let half = size / 2.0;
    let color = |c: MotionClass| match c {
        MotionClass::Left => "#d62728",
        MotionClass::Right => "#1f77b4",
        MotionClass::Up => "#2ca02c",
        MotionClass::Down => "#9467bd",
        _ => "#7f7f7f",
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    s.push_str(&format!(
        "<line x1=\"0\" y1=\"{half}\" x2=\"{size}\" y2=\"{half}\" stroke=\"#999\"/>\n"
    ));
    s.push_str(&format!(
        "<line x1=\"{half}\" y1=\"0\" x2=\"{half}\" y2=\"{size}\" stroke=\"#999\"/>\n"
    ));
    for ((x, y), label) in displacements {
        let px = half + x.clamp(-1.0, 1.0) * (half - 10.0);
        let py = half + y.clamp(-1.0, 1.0) * (half - 10.0);
        s.push_str(&format!(
            "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
            color(*label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// The past view warped by a predicted motion (yellow: R and G channels)
/// overlaid with the current view (blue: B channel).
#[derive(Debug, Clone)]
pub struct OverlayImage {
    pub width: u32,
    pub height: u32,
    pub r: Vec<f32>,
    pub g: Vec<f32>,
    pub b: Vec<f32>,
    /// True where the warped past sample fell inside the past frame.
    pub valid: Vec<bool>,
}

impl OverlayImage {
    /// Mean |R - B| over the valid region; lower is better alignment.
    pub fn misalignment(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for i in 0..self.r.len() {
            if self.valid[i] {
                sum += f64::from((self.r[i] - self.b[i]).abs());
                n += 1;
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            sum / n as f64
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), EvalError> {
        let mut buf = Vec::with_capacity(self.r.len() * 3);
        for i in 0..self.r.len() {
            buf.push((self.r[i].clamp(0.0, 1.0) * 255.0).round() as u8);
            buf.push((self.g[i].clamp(0.0, 1.0) * 255.0).round() as u8);
            buf.push((self.b[i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        let img = image::RgbImage::from_raw(self.width, self.height, buf)
            .expect("buffer matches dimensions");
        img.save(path).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })
    }
}

/// Warps `past` by the homography of `d` (bilinear inverse sampling,
/// out-of-bounds reads 0) and overlays `current`.
pub fn warp_overlay(
    past: &GrayFrame,
    current: &GrayFrame,
    d: &FourPointDelta,
) -> Result<OverlayImage, EvalError> {
    if past.width() != current.width() || past.height() != current.height() {
        return Err(EvalError::InvalidInput("frame sizes differ".into()));
    }
    let geom = past.geometry();
    let g = matrix_from_four_point(d, &geom)?;
    let g_inv = g.invert()?;
    let (w, h) = (past.width() as usize, past.height() as usize);
    let mut r = vec![0.0f32; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let src = g_inv.project(Point2::new(x as f64, y as f64))?;
            let inside = src.x >= 0.0
                && src.y >= 0.0
                && src.x <= (w - 1) as f64
                && src.y <= (h - 1) as f64;
            let i = y * w + x;
            valid[i] = inside;
            if inside {
                r[i] = past.sample_bilinear(src.x, src.y);
            }
        }
    }
    Ok(OverlayImage {
        width: past.width(),
        height: past.height(),
        g: r.clone(),
        r,
        b: current.pixels().to_vec(),
        valid,
    })
}

/// Something that turns a frame sequence into per-step motion estimates.
pub trait SequenceEstimator: Sync {
    fn name(&self) -> &str;
    fn estimate_sequence(
        &self,
        frames: &[GrayFrame],
    ) -> Result<Vec<FourPointDelta>, EstimationError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub mean_s: f64,
    pub std_s: f64,
    /// Mean time of the slowest method divided by this method's mean time.
    pub speedup: f64,
    pub failures: usize,
}

/// Times every estimator over `repeats` runs of the same sequence, excluding
/// one warm-up iteration. Wall time only.
pub fn run_benchmark(
    estimators: &[&dyn SequenceEstimator],
    frames: &[GrayFrame],
    repeats: usize,
) -> Result<Vec<BenchRow>, EvalError> {
    if repeats < 2 {
        return Err(EvalError::InvalidInput("need at least 2 repeats".into()));
    }
    if estimators.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(estimators.len());
    for est in estimators {
        let _ = est.estimate_sequence(frames);
        let mut times = Vec::with_capacity(repeats);
        let mut failures = 0usize;
        for _ in 0..repeats {
            let t0 = Instant::now();
            if est.estimate_sequence(frames).is_err() {
                failures += 1;
            }
            times.push(t0.elapsed().as_secs_f64());
        }
        let (mean_s, std_s) = mean_std(&times);
        rows.push(BenchRow { method: est.name().to_string(), mean_s, std_s, speedup: 0.0, failures });
    }
    let slowest = rows.iter().map(|r| r.mean_s).fold(0.0f64, f64::max);
    for row in rows.iter_mut() {
        row.speedup = slowest / row.mean_s;
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("method,mean_s,std_s,speedup,failures\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.2},{}\n",
            r.method, r.mean_s, r.std_s, r.speedup, r.failures
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub mpd_mean: f64,
    pub mpd_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClipRecord {
    pub video_id: String,
    pub start: usize,
    /// Per-method mean pairwise distance of this clip, pixels.
    pub values: BTreeMap<String, f64>,
}

/// The evaluation artifact: aggregate and per-clip MPD per method, the
/// label-agreement table when labels exist, and the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub methods: BTreeMap<String, MethodStats>,
    pub per_clip: Vec<PerClipRecord>,
    pub label_agreement: Option<AgreementReport>,
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_json_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn per_clip_csv(&self) -> String {
        let methods: Vec<&String> = self.methods.keys().collect();
        let mut s = String::from("video_id,start");
        for m in &methods {
            s.push(',');
            s.push_str(m);
        }
        s.push('\n');
        for rec in &self.per_clip {
            s.push_str(&format!("{},{}", rec.video_id, rec.start));
            for m in &methods {
                s.push(',');
                if let Some(v) = rec.values.get(*m) {
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|source| EvalError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, self.to_json_string()).map_err(|source| EvalError::Io {
            path: json_path.clone(),
            source,
        })?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.per_clip_csv()).map_err(|source| EvalError::Io {
            path: csv_path.clone(),
            source,
        })
    }
}

/// Scores the trained model (when given) and both Taylor baselines on every
/// clip. Baselines read the recall motions; the model reads the frames.
pub fn evaluate_clips(
    items: &[(Clip, DataSample)],
    model: Option<&PredictorModel>,
) -> Result<(BTreeMap<String, MethodStats>, Vec<PerClipRecord>), EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut per_clip: Vec<PerClipRecord> = Vec::with_capacity(items.len());
    let model_preds: Option<Vec<Vec<FourPointDelta>>> = match model {
        Some(m) => {
            let inputs: Vec<_> = items.iter().map(|(_, s)| s.input.clone()).collect();
            Some(m.forward_many(&inputs).map_err(|e| EvalError::InvalidInput(e.to_string()))?)
        }
        None => None,
    };
    for (i, (clip, sample)) in items.iter().enumerate() {
        let preview = sample.target.len();
        let mut values = BTreeMap::new();
        if let Ok(p) = taylor_o1(&sample.input.recall_motions, preview) {
            values.insert("taylor_o1".to_string(), loss(&p, &sample.target, 0.0));
        }
        if let Ok(p) = taylor_o2(&sample.input.recall_motions, preview) {
            values.insert("taylor_o2".to_string(), loss(&p, &sample.target, 0.0));
        }
        if let Some(preds) = &model_preds {
            values.insert("model".to_string(), loss(&preds[i], &sample.target, 0.0));
        }
        per_clip.push(PerClipRecord {
            video_id: clip.video_id.clone(),
            start: clip.start,
            values,
        });
    }
    let mut methods = BTreeMap::new();
    for name in ["taylor_o1", "taylor_o2", "model"] {
        let values: Vec<f64> =
            per_clip.iter().filter_map(|r| r.values.get(name).copied()).collect();
        if !values.is_empty() {
            let (mean, std) = mean_std(&values);
            methods.insert(name.to_string(), MethodStats { mpd_mean: mean, mpd_std: std });
        }
    }
    Ok((methods, per_clip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Homography;
    use crate::synthetic::{generate_scene, random_four_point, render_pair, RenderOptions};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> FrameGeometry {
        FrameGeometry::new(320, 240)
    }

    #[test]
    fn mpd_trivials() {
        let x = vec![vec![FourPointDelta::uniform(1.0, 2.0)]; 3];
        let (m, s) = mpd(&x, &x).unwrap();
        assert_eq!((m, s), (0.0, 0.0));
        let t = vec![vec![FourPointDelta::zero()]; 3];
        let p = vec![vec![FourPointDelta::uniform(3.0, 4.0)]; 3];
        let (m, s) = mpd(&p, &t).unwrap();
        assert_eq!((m, s), (5.0, 0.0));
    }

    #[test]
    fn mpd_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let preds: Vec<Vec<FourPointDelta>> =
            (0..40).map(|_| vec![random_four_point(&mut rng, 8.0), random_four_point(&mut rng, 8.0)]).collect();
        let targets: Vec<Vec<FourPointDelta>> =
            (0..40).map(|_| vec![random_four_point(&mut rng, 8.0), random_four_point(&mut rng, 8.0)]).collect();
        let (mean, std) = mpd(&preds, &targets).unwrap();

        // Independent double loop over samples, steps and corners.
        let mut values = Vec::new();
        for (p, t) in preds.iter().zip(targets.iter()) {
            let mut acc = 0.0;
            let mut c = 0usize;
            for (dp, dt) in p.iter().zip(t.iter()) {
                for i in 0..4 {
                    let dx = dp.corner(i).x - dt.corner(i).x;
                    let dy = dp.corner(i).y - dt.corner(i).y;
                    acc += (dx * dx + dy * dy).sqrt();
                    c += 1;
                }
            }
            values.push(acc / c as f64);
        }
        let n = values.len() as f64;
        let bf_mean = values.iter().sum::<f64>() / n;
        let bf_var = values.iter().map(|v| (v - bf_mean).powi(2)).sum::<f64>() / n;
        assert!((mean - bf_mean).abs() < 1e-12);
        assert!((std - bf_var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mpd_metric_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<Vec<FourPointDelta>> = (0..10).map(|_| vec![random_four_point(&mut rng, 5.0)]).collect();
        let b: Vec<Vec<FourPointDelta>> = (0..10).map(|_| vec![random_four_point(&mut rng, 5.0)]).collect();
        let c: Vec<Vec<FourPointDelta>> = (0..10).map(|_| vec![random_four_point(&mut rng, 5.0)]).collect();
        assert_eq!(mpd(&a, &a).unwrap().0, 0.0);
        assert!((mpd(&a, &b).unwrap().0 - mpd(&b, &a).unwrap().0).abs() < 1e-15);
        // Triangle bound on the per-sample values.
        for i in 0..a.len() {
            let ab = loss(&a[i], &b[i], 0.0);
            let bc = loss(&b[i], &c[i], 0.0);
            let ac = loss(&a[i], &c[i], 0.0);
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn center_displacement_cases() {
        let g = geom();
        let (zx, zy) = center_displacement(&FourPointDelta::zero(), &g).unwrap();
        assert!(zx.abs() < 1e-12 && zy.abs() < 1e-12);
        let (x, y) = center_displacement(&FourPointDelta::uniform(5.0, 0.0), &g).unwrap();
        assert!((x - 5.0 / 159.5).abs() < 1e-12);
        assert!(y.abs() < 1e-12);

        // Pure zoom about the center leaves the center fixed.
        let c = g.center();
        let zoom = Homography::from_rows([
            [1.1, 0.0, c.x * (1.0 - 1.1)],
            [0.0, 1.1, c.y * (1.0 - 1.1)],
            [0.0, 0.0, 1.0],
        ])
        .unwrap();
        let d = crate::geometry::four_point_from_matrix(&zoom, &g).unwrap();
        let (x, y) = center_displacement(&d, &g).unwrap();
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn center_displacement_mirrors_under_fliph() {
        use crate::augmentation::{conjugate_motion, GeometricTransform};
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_four_point(&mut rng, 6.0);
        let (x, y) = center_displacement(&d, &g).unwrap();
        let flipped = conjugate_motion(&d, GeometricTransform::FlipH, &g).unwrap();
        let (fx, fy) = center_displacement(&flipped, &g).unwrap();
        assert!((fx + x).abs() < 1e-9);
        assert!((fy - y).abs() < 1e-9);
    }

    fn labeled(video: &str, start: usize, d: FourPointDelta) -> LabeledPrediction {
        LabeledPrediction { video_id: video.into(), start, pred: vec![d] }
    }

    #[test]
    fn agreement_perfect_right() {
        let g = geom();
        let preds: Vec<LabeledPrediction> =
            (0..10).map(|i| labeled("v", i, FourPointDelta::uniform(5.0, 0.1))).collect();
        let labels: BTreeMap<(String, usize), MotionClass> =
            (0..10).map(|i| (("v".to_string(), i), MotionClass::Right)).collect();
        let rep = label_agreement(&preds, &labels, &g).unwrap();
        assert_eq!(rep.overall_agreement, Some(1.0));
        assert!(!rep.negated);
        assert_eq!(rep.per_class["right"].count, 10);
        assert_eq!(rep.per_class["right"].agreement, Some(1.0));
    }

    #[test]
    fn zero_predictions_abstain() {
        let g = geom();
        let preds = vec![labeled("v", 0, FourPointDelta::zero())];
        let labels: BTreeMap<(String, usize), MotionClass> =
            [(("v".to_string(), 0), MotionClass::Left)].into();
        let rep = label_agreement(&preds, &labels, &g).unwrap();
        assert_eq!(rep.abstentions, 1);
        assert_eq!(rep.overall_agreement, None);
        assert_eq!(rep.per_class["left"].agreement, None);
    }

    #[test]
    fn global_negation_is_detected() {
        let g = geom();
        // Predictions point exactly opposite to their labels.
        let preds = vec![
            labeled("v", 0, FourPointDelta::uniform(-5.0, 0.0)),
            labeled("v", 1, FourPointDelta::uniform(0.0, 5.0)),
        ];
        let labels: BTreeMap<(String, usize), MotionClass> = [
            (("v".to_string(), 0), MotionClass::Right),
            (("v".to_string(), 1), MotionClass::Up),
        ]
        .into();
        let rep = label_agreement(&preds, &labels, &g).unwrap();
        assert!(rep.negated);
        assert_eq!(rep.overall_agreement, Some(1.0));
    }

    #[test]
    fn missing_label_is_detected() {
        let g = geom();
        let preds = vec![labeled("v", 3, FourPointDelta::uniform(1.0, 0.0))];
        let labels = BTreeMap::new();
        assert!(matches!(
            label_agreement(&preds, &labels, &g),
            Err(EvalError::LabelMismatch(_))
        ));
    }

    #[test]
    fn constructed_agreement_fractions() {
        let g = geom();
        // 3 correct rights, 1 wrong (points left), labels all Right.
        let preds = vec![
            labeled("v", 0, FourPointDelta::uniform(4.0, 0.0)),
            labeled("v", 1, FourPointDelta::uniform(4.0, 0.5)),
            labeled("v", 2, FourPointDelta::uniform(3.0, -0.5)),
            labeled("v", 3, FourPointDelta::uniform(-4.0, 0.0)),
        ];
        let labels: BTreeMap<(String, usize), MotionClass> =
            (0..4).map(|i| (("v".to_string(), i), MotionClass::Right)).collect();
        let rep = label_agreement(&preds, &labels, &g).unwrap();
        assert_eq!(rep.per_class["right"].agreement, Some(0.75));
    }

    #[test]
    fn overlay_identity_is_gray() {
        let scene = generate_scene(31, 512);
        let g = FrameGeometry::new(128, 96);
        let (a, _) = render_pair(&scene, &Homography::identity(), &g, &RenderOptions::default())
            .unwrap();
        let overlay = warp_overlay(&a, &a, &FourPointDelta::zero()).unwrap();
        for i in 0..overlay.r.len() {
            assert_eq!(overlay.r[i], overlay.g[i]);
            if overlay.valid[i] {
                assert!((overlay.r[i] - overlay.b[i]).abs() < 1e-6);
            }
        }
        // Only an epsilon rim at the border may fall outside the mask.
        let invalid = overlay.valid.iter().filter(|v| !**v).count();
        assert!(invalid <= 2 * (overlay.width + overlay.height) as usize);
        assert!(overlay.misalignment() < 1e-6);
    }

    #[test]
    fn overlay_truth_beats_perturbed() {
        let scene = generate_scene(32, 1024);
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let h = crate::synthetic::random_homography(&mut rng, &g, 8.0);
        let truth = crate::geometry::four_point_from_matrix(&h, &g).unwrap();
        let (a, b) = render_pair(&scene, &h, &g, &RenderOptions::default()).unwrap();

        let aligned = warp_overlay(&a, &b, &truth).unwrap();
        assert!(aligned.misalignment() <= 2.0 / 255.0, "{}", aligned.misalignment());

        // Perturb every corner by at least 3 px.
        let mut corners = truth.corners();
        for (i, c) in corners.iter_mut().enumerate() {
            let s = if i % 2 == 0 { 3.0 } else { -3.0 };
            *c = *c + Point2::new(s, -s);
        }
        let perturbed = warp_overlay(&a, &b, &FourPointDelta::new(corners).unwrap()).unwrap();
        assert!(perturbed.misalignment() > aligned.misalignment());
    }

    /// Busy-waits a fixed duration: precise even under loaded test runs,
    /// unlike thread::sleep.
    struct SpinEstimator {
        name: &'static str,
        micros: u64,
    }

    impl SequenceEstimator for SpinEstimator {
        fn name(&self) -> &str {
            self.name
        }
        fn estimate_sequence(
            &self,
            _frames: &[GrayFrame],
        ) -> Result<Vec<FourPointDelta>, EstimationError> {
            let t0 = Instant::now();
            while t0.elapsed() < std::time::Duration::from_micros(self.micros) {
                std::hint::spin_loop();
            }
            Ok(vec![])
        }
    }

    #[test]
    fn benchmark_speedup_ratio() {
        let fast = SpinEstimator { name: "fast", micros: 20_000 };
        let slow = SpinEstimator { name: "slow", micros: 40_000 };
        let frames = vec![GrayFrame::filled(16, 16, 0.5)];
        let rows = run_benchmark(&[&slow, &fast], &frames, 10).unwrap();
        assert_eq!(rows.len(), 2);
        let slow_row = rows.iter().find(|r| r.method == "slow").unwrap();
        let fast_row = rows.iter().find(|r| r.method == "fast").unwrap();
        assert_eq!(slow_row.speedup, 1.0);
        assert!((fast_row.speedup - 2.0).abs() <= 0.2, "speedup {}", fast_row.speedup);
        assert!(run_benchmark(&[&fast], &frames, 1).is_err());
    }

    #[test]
    fn report_aggregates_match_per_clip() {
        use crate::predictor::PredictorInput;
        use crate::sampling::ClipSpec;
        let spec = ClipSpec { n_recall: 3, m_preview: 1, dn: 1, dc: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let items: Vec<(Clip, DataSample)> = (0..12)
            .map(|i| {
                let clip = Clip { video_id: "v".into(), start: i, spec };
                let motions: Vec<FourPointDelta> =
                    (0..2).map(|_| random_four_point(&mut rng, 4.0)).collect();
                let sample = DataSample {
                    input: PredictorInput {
                        recall_frames: vec![GrayFrame::filled(4, 4, 0.5); 3],
                        recall_motions: motions,
                        geom: geom(),
                    },
                    target: vec![random_four_point(&mut rng, 4.0)],
                };
                (clip, sample)
            })
            .collect();
        let (methods, per_clip) = evaluate_clips(&items, None).unwrap();
        for name in ["taylor_o1", "taylor_o2"] {
            let vals: Vec<f64> = per_clip.iter().map(|r| r.values[name]).collect();
            let (mean, _) = mean_std(&vals);
            assert!((methods[name].mpd_mean - mean).abs() < 1e-9);
        }
        let report = EvalReport {
            config: serde_json::json!({}),
            methods,
            per_clip,
            label_agreement: None,
        };
        let h1 = report.content_hash();
        assert_eq!(h1.len(), 64);
        assert_eq!(h1, report.content_hash());
        assert!(report.per_clip_csv().starts_with("video_id,start,taylor_o1,taylor_o2"));
    }
}
