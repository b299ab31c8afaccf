//! Pseudo-ground-truth camera-motion estimation between frame pairs.
//!
//! The estimator is classical: minimum-eigenvalue corner detection, patch
//! matching by zero-normalized cross-correlation, and a RANSAC homography fit
//! that separates dominant camera motion from independently moving objects.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::GrayFrame;
use crate::geometry::{
    four_point_from_matrix, homography_from_four_pairs, normalizing_similarity, FourPointDelta,
    GeometryError, Homography, Point2, CONDITION_LIMIT,
};

/// Matches with a zero-normalized cross-correlation below this are dropped.
pub const ZNCC_MIN: f64 = 0.5;
/// Corner responses below this count as texture-free.
const RESPONSE_EPS: f64 = 1e-8;
/// Confidence target of the adaptive RANSAC iteration bound.
const RANSAC_CONFIDENCE: f64 = 0.999;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("too few features: found {found}, need at least {need}")]
    TooFewFeatures { found: usize, need: usize },
    #[error("no consensus: best inlier ratio {best_ratio:.3} below {min_ratio:.3}")]
    NoConsensus { best_ratio: f64, min_ratio: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Point correspondences between two frames with per-pair confidences.
#[derive(Debug, Clone, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Point2, Point2)>,
    pub scores: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, p: Point2, q: Point2, score: f64) {
        self.pairs.push((p, q));
        self.scores.push(score);
    }
}

/// RANSAC parameters; symmetric transfer error is the inlier criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iters: usize,
    /// Inlier threshold on the symmetric transfer error, pixels.
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { max_iters: 2000, inlier_threshold: 2.0, min_inlier_ratio: 0.3, seed: 0 }
    }
}

/// Full estimator configuration wrapping detection, matching and RANSAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub max_corners: usize,
    pub min_corner_distance: f64,
    /// Odd ZNCC patch size, >= 5.
    pub window: u32,
    /// Integer search radius in pixels; bounds the measurable displacement.
    pub search_radius: u32,
    pub ransac: RansacConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_corners: 200,
            min_corner_distance: 8.0,
            window: 11,
            search_radius: 24,
            ransac: RansacConfig::default(),
        }
    }
}

/// Minimum-eigenvalue corner response of the 3x3-aggregated structure tensor,
/// computed from central-difference gradients. Zero on the 2-pixel border.
fn corner_response_map(f: &GrayFrame) -> Vec<f64> {
    let (w, h) = (f.width() as usize, f.height() as usize);
    let px = f.pixels();
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            gx[i] = (f64::from(px[i + 1]) - f64::from(px[i - 1])) / 2.0;
            gy[i] = (f64::from(px[i + w]) - f64::from(px[i - w])) / 2.0;
        }
    }
    let mut resp = vec![0.0f64; w * h];
    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let i = ((y as i64 + dy) as usize) * w + (x as i64 + dx) as usize;
                    sxx += gx[i] * gx[i];
                    sxy += gx[i] * gy[i];
                    syy += gy[i] * gy[i];
                }
            }
            let tr = sxx + syy;
            let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
            resp[y * w + x] = (tr - disc) / 2.0;
        }
    }
    resp
}

/// Up to `max_count` corner locations, strongest first, greedily suppressing
/// anything closer than `min_distance` to an accepted corner.
pub fn detect_corners(
    f: &GrayFrame,
    max_count: usize,
    min_distance: f64,
) -> Result<Vec<Point2>, EstimationError> {
    if f.width() < 16 || f.height() < 16 {
        return Err(EstimationError::InvalidInput(format!(
            "frame {}x{} below the 16x16 detection minimum",
            f.width(),
            f.height()
        )));
    }
    let w = f.width() as usize;
    let resp = corner_response_map(f);
    let mut candidates: Vec<(f64, usize, usize)> = resp
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > RESPONSE_EPS)
        .map(|(i, r)| (*r, i % w, i / w))
        .collect();
    // Strongest first; ties broken by position for determinism.
    candidates.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| (a.2, a.1).cmp(&(b.2, b.1)))
    });

    let min_d2 = min_distance * min_distance;
    let mut accepted: Vec<Point2> = Vec::new();
    for (_, x, y) in candidates {
        if accepted.len() >= max_count {
            break;
        }
        let p = Point2::new(x as f64, y as f64);
        if accepted.iter().all(|q| {
            let dx = p.x - q.x;
            let dy = p.y - q.y;
            dx * dx + dy * dy >= min_d2
        }) {
            accepted.push(p);
        }
    }
    if accepted.len() < 8 {
        return Err(EstimationError::TooFewFeatures { found: accepted.len(), need: 8 });
    }
    Ok(accepted)
}

struct Patch {
    /// Raw intensities, row-major.
    values: Vec<f64>,
    sum: f64,
    sum_sq: f64,
}

impl Patch {
    fn energy(&self) -> f64 {
        self.sum_sq - self.sum * self.sum / self.values.len() as f64
    }
}

fn extract_patch(f: &GrayFrame, cx: i64, cy: i64, half: i64) -> Option<Patch> {
    let (w, h) = (i64::from(f.width()), i64::from(f.height()));
    if cx - half < 0 || cy - half < 0 || cx + half >= w || cy + half >= h {
        return None;
    }
    let side = (2 * half + 1) as usize;
    let mut values = Vec::with_capacity(side * side);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in cy - half..=cy + half {
        for x in cx - half..=cx + half {
            let v = f64::from(f.get(x as u32, y as u32));
            values.push(v);
            sum += v;
            sum_sq += v * v;
        }
    }
    Some(Patch { values, sum, sum_sq })
}

/// Prefix sums of intensities and squared intensities, one row/column of
/// zero padding, giving O(1) window statistics.
struct IntegralImage {
    w: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl IntegralImage {
    fn build(f: &GrayFrame) -> Self {
        let (w, h) = (f.width() as usize, f.height() as usize);
        let stride = w + 1;
        let mut s1 = vec![0.0f64; stride * (h + 1)];
        let mut s2 = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row1 = 0.0f64;
            let mut row2 = 0.0f64;
            for x in 0..w {
                let v = f64::from(f.pixels()[y * w + x]);
                row1 += v;
                row2 += v * v;
                s1[(y + 1) * stride + x + 1] = s1[y * stride + x + 1] + row1;
                s2[(y + 1) * stride + x + 1] = s2[y * stride + x + 1] + row2;
            }
        }
        Self { w: stride, s1, s2 }
    }

    /// Sum and sum of squares over the inclusive pixel box.
    fn window(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let (a, b, c, d) = (
            y0 * self.w + x0,
            y0 * self.w + x1 + 1,
            (y1 + 1) * self.w + x0,
            (y1 + 1) * self.w + x1 + 1,
        );
        (
            self.s1[d] - self.s1[b] - self.s1[c] + self.s1[a],
            self.s2[d] - self.s2[b] - self.s2[c] + self.s2[a],
        )
    }
}

/// ZNCC of a cached patch against the window of `b` centered at (bx, by),
/// using integral-image statistics and a raw dot product.
#[allow(clippy::too_many_arguments)]
fn zncc_at(
    pa: &Patch,
    energy_a: f64,
    b: &GrayFrame,
    ii: &IntegralImage,
    bx: i64,
    by: i64,
    half: i64,
) -> Option<f64> {
    let (w, h) = (i64::from(b.width()), i64::from(b.height()));
    if bx - half < 0 || by - half < 0 || bx + half >= w || by + half >= h {
        return None;
    }
    let (x0, y0) = ((bx - half) as usize, (by - half) as usize);
    let side = (2 * half + 1) as usize;
    let n = (side * side) as f64;
    let (sum_b, sum_sq_b) = ii.window(x0, y0, x0 + side - 1, y0 + side - 1);
    let energy_b = sum_sq_b - sum_b * sum_b / n;
    let denom_sq = energy_a * energy_b;
    if denom_sq <= 1e-20 {
        return None;
    }
    let bw = b.width() as usize;
    let pixels = b.pixels();
    let mut dot = 0.0f64;
    for row in 0..side {
        let brow = &pixels[(y0 + row) * bw + x0..(y0 + row) * bw + x0 + side];
        let arow = &pa.values[row * side..(row + 1) * side];
        for (av, bv) in arow.iter().zip(brow.iter()) {
            dot += av * f64::from(*bv);
        }
    }
    let num = dot - pa.sum * sum_b / n;
    Some(num / denom_sq.sqrt())
}

/// Parabolic peak refinement from three samples around the maximum.
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-12 {
        return 0.0;
    }
    let d = 0.5 * (left - right) / denom;
    d.clamp(-0.5, 0.5)
}

/// For each point in `a`, the best ZNCC match in `b` within `search_radius`,
/// refined to sub-pixel accuracy. Matches scoring below [`ZNCC_MIN`] are
/// dropped.
pub fn match_patches(
    a: &GrayFrame,
    b: &GrayFrame,
    points: &[Point2],
    window: u32,
    search_radius: u32,
) -> Result<CorrespondenceSet, EstimationError> {
    if window < 5 || window % 2 == 0 {
        return Err(EstimationError::InvalidInput(format!(
            "window must be odd and >= 5, got {window}"
        )));
    }
    if search_radius < 1 {
        return Err(EstimationError::InvalidInput("search radius must be >= 1".into()));
    }
    let half = i64::from(window / 2);
    let r = i64::from(search_radius);
    let side = (2 * r + 1) as usize;
    let ii = IntegralImage::build(b);

    let matches: Vec<Option<(Point2, Point2, f64)>> = points
        .par_iter()
        .map(|p| {
            let cx = p.x.round() as i64;
            let cy = p.y.round() as i64;
            let pa = extract_patch(a, cx, cy, half)?;
            let energy_a = pa.energy();
            if energy_a <= 1e-12 {
                return None;
            }
            let mut grid = vec![f64::NEG_INFINITY; side * side];
            let mut best = (f64::NEG_INFINITY, 0i64, 0i64);
            for dy in -r..=r {
                for dx in -r..=r {
                    let Some(score) = zncc_at(&pa, energy_a, b, &ii, cx + dx, cy + dy, half)
                    else {
                        continue;
                    };
                    grid[(dy + r) as usize * side + (dx + r) as usize] = score;
                    if score > best.0 {
                        best = (score, dx, dy);
                    }
                }
            }
            let (score, dx, dy) = best;
            if score < ZNCC_MIN {
                return None;
            }
            // Sub-pixel refinement on the correlation surface where the
            // neighboring samples exist. A perfect correlation is already an
            // exact match; the parabola would only bias it.
            if score >= 1.0 - 1e-9 {
                return Some((
                    Point2::new(cx as f64, cy as f64),
                    Point2::new((cx + dx) as f64, (cy + dy) as f64),
                    score.min(1.0),
                ));
            }
            let at = |ddx: i64, ddy: i64| -> Option<f64> {
                if (dx + ddx).abs() > r || (dy + ddy).abs() > r {
                    return None;
                }
                let v = grid[(dy + ddy + r) as usize * side + (dx + ddx + r) as usize];
                v.is_finite().then_some(v)
            };
            let sub_x = match (at(-1, 0), at(1, 0)) {
                (Some(l), Some(rv)) => parabolic_offset(l, score, rv),
                _ => 0.0,
            };
            let sub_y = match (at(0, -1), at(0, 1)) {
                (Some(u), Some(d)) => parabolic_offset(u, score, d),
                _ => 0.0,
            };
            let q = Point2::new(
                cx as f64 + dx as f64 + sub_x,
                cy as f64 + dy as f64 + sub_y,
            );
            Some((Point2::new(cx as f64, cy as f64), q, score.min(1.0)))
        })
        .collect();

    let mut set = CorrespondenceSet::default();
    for m in matches.into_iter().flatten() {
        set.push(m.0, m.1, m.2);
    }
    Ok(set)
}

/// Least-squares DLT over all correspondences with similarity normalization.
/// Exact inputs are reproduced to well below 1e-6 px of transfer error.
pub fn dlt_homography(c: &CorrespondenceSet) -> Result<Homography, EstimationError> {
    dlt_from_pairs(&c.pairs)
}

pub(crate) fn dlt_from_pairs(pairs: &[(Point2, Point2)]) -> Result<Homography, EstimationError> {
    let n = pairs.len();
    if n < 4 {
        return Err(EstimationError::InvalidInput(format!(
            "need at least 4 correspondences, got {n}"
        )));
    }
    let src: Vec<Point2> = pairs.iter().map(|(p, _)| *p).collect();
    let dst: Vec<Point2> = pairs.iter().map(|(_, q)| *q).collect();
    let (t_src, _) = normalizing_similarity(&src)?;
    let (t_dst, t_dst_inv) = normalizing_similarity(&dst)?;

    // Stacked DLT constraints; one zero pad row keeps the row count at >= 9
    // so the full set of right singular vectors is available.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in pairs.iter().enumerate() {
        let pn = t_src.project(*p)?;
        let qn = t_dst.project(*q)?;
        let r0 = 2 * i;
        a[(r0, 0)] = pn.x;
        a[(r0, 1)] = pn.y;
        a[(r0, 2)] = 1.0;
        a[(r0, 6)] = -pn.x * qn.x;
        a[(r0, 7)] = -pn.y * qn.x;
        a[(r0, 8)] = -qn.x;
        let r1 = r0 + 1;
        a[(r1, 3)] = pn.x;
        a[(r1, 4)] = pn.y;
        a[(r1, 5)] = 1.0;
        a[(r1, 6)] = -pn.x * qn.y;
        a[(r1, 7)] = -pn.y * qn.y;
        a[(r1, 8)] = -qn.y;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_unstable_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    // Rank must be 8: compare the largest singular value against the 8th.
    let s0 = sv[order[0]];
    let s7 = sv[order[7]];
    if !(s7 > 0.0) || s0 / s7 > CONDITION_LIMIT {
        return Err(GeometryError::DegenerateConfiguration {
            ratio: if s7 > 0.0 { s0 / s7 } else { f64::INFINITY },
        }
        .into());
    }
    let null = order[sv.len() - 1];
    let h = v_t.row(null);
    let g_norm = Homography::from_rows([
        [h[0], h[1], h[2]],
        [h[3], h[4], h[5]],
        [h[6], h[7], h[8]],
    ])
    .map_err(|_| GeometryError::DegenerateConfiguration { ratio: f64::INFINITY })?;
    Ok(t_dst_inv.compose(&g_norm).compose(&t_src))
}

/// Symmetric transfer error: mean of the forward and backward reprojection
/// distances, in pixels. Degenerate projections count as infinite.
pub fn symmetric_transfer_error(g: &Homography, g_inv: &Homography, p: Point2, q: Point2) -> f64 {
    let fwd = match g.project(p) {
        Ok(qp) => (qp - q).norm(),
        Err(_) => return f64::INFINITY,
    };
    let bwd = match g_inv.project(q) {
        Ok(pq) => (pq - p).norm(),
        Err(_) => return f64::INFINITY,
    };
    (fwd + bwd) / 2.0
}

fn inlier_mask(
    pairs: &[(Point2, Point2)],
    g: &Homography,
    threshold: f64,
) -> Option<(Vec<bool>, usize, f64)> {
    let g_inv = g.invert().ok()?;
    let mut mask = vec![false; pairs.len()];
    let mut count = 0usize;
    let mut err_sum = 0.0;
    for (i, (p, q)) in pairs.iter().enumerate() {
        let e = symmetric_transfer_error(g, &g_inv, *p, *q);
        if e < threshold {
            mask[i] = true;
            count += 1;
            err_sum += e;
        }
    }
    let mean = if count > 0 { err_sum / count as f64 } else { f64::INFINITY };
    Some((mask, count, mean))
}

/// Robust homography fit. The best four-point hypothesis by inlier count
/// (ties to the lower mean inlier error) is refined by DLT over its inliers;
/// the returned mask is evaluated under the refined model. Deterministic for
/// a given seed.
pub fn ransac_homography(
    c: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<(Homography, Vec<bool>), EstimationError> {
    let n = c.pairs.len();
    if n < 8 {
        return Err(EstimationError::TooFewFeatures { found: n, need: 8 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, f64, Homography)> = None;

    let mut iter = 0usize;
    let mut needed = cfg.max_iters;
    while iter < cfg.max_iters.min(needed) {
        iter += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let sample = [
            c.pairs[idx.index(0)],
            c.pairs[idx.index(1)],
            c.pairs[idx.index(2)],
            c.pairs[idx.index(3)],
        ];
        let Ok(h) = homography_from_four_pairs(&sample) else { continue };
        let Some((_, count, mean)) = inlier_mask(&c.pairs, &h, cfg.inlier_threshold) else {
            continue;
        };
        let better = match &best {
            None => count > 0,
            Some((bc, bm, _)) => count > *bc || (count == *bc && mean < *bm),
        };
        if better {
            best = Some((count, mean, h));
            // Standard adaptive bound on the number of draws.
            let w = count as f64 / n as f64;
            let p_all = w.powi(4);
            if p_all >= 1.0 - 1e-12 {
                break;
            }
            let k = (1.0 - RANSAC_CONFIDENCE).ln() / (1.0 - p_all).ln();
            needed = k.ceil().max(1.0) as usize;
        }
    }

    let Some((count, _, hypothesis)) = best else {
        return Err(EstimationError::NoConsensus {
            best_ratio: 0.0,
            min_ratio: cfg.min_inlier_ratio,
        });
    };
    let ratio = count as f64 / n as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(EstimationError::NoConsensus { best_ratio: ratio, min_ratio: cfg.min_inlier_ratio });
    }

    let (hyp_mask, _, _) =
        inlier_mask(&c.pairs, &hypothesis, cfg.inlier_threshold).expect("hypothesis invertible");
    let inlier_pairs: Vec<(Point2, Point2)> = c
        .pairs
        .iter()
        .zip(hyp_mask.iter())
        .filter(|(_, keep)| **keep)
        .map(|(pair, _)| *pair)
        .collect();

    // Refinement only replaces the hypothesis when it does not lose inliers.
    let mut final_h = hypothesis;
    let mut final_mask = hyp_mask;
    if let Ok(refined) = dlt_from_pairs(&inlier_pairs) {
        if let Some((mask, rcount, _)) = inlier_mask(&c.pairs, &refined, cfg.inlier_threshold) {
            if rcount >= count {
                final_h = refined;
                final_mask = mask;
            }
        }
    }
    Ok((final_h, final_mask))
}

/// Dominant-plane motion of `b` relative to `a` in the forward corner
/// displacement convention: detect, match, RANSAC, convert.
pub fn estimate_motion(
    a: &GrayFrame,
    b: &GrayFrame,
    cfg: &RansacConfig,
) -> Result<FourPointDelta, EstimationError> {
    let est = EstimatorConfig { ransac: *cfg, ..EstimatorConfig::default() };
    estimate_motion_with(a, b, &est)
}

/// Separable [1 2 1]/4 blur with clamped borders. Pixel noise decorrelated
/// across frames mostly cancels here, while the texture needed for matching
/// survives.
fn smooth3(f: &GrayFrame) -> GrayFrame {
    let (w, h) = (f.width() as usize, f.height() as usize);
    let px = f.pixels();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = px[y * w + x.saturating_sub(1)];
            let c = px[y * w + x];
            let r = px[y * w + (x + 1).min(w - 1)];
            tmp[y * w + x] = 0.25 * l + 0.5 * c + 0.25 * r;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let dn = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] = 0.25 * tmp[up * w + x] + 0.5 * tmp[y * w + x] + 0.25 * tmp[dn * w + x];
        }
    }
    GrayFrame::new(f.width(), f.height(), out).expect("blur preserves range")
}

/// Spreads response-sorted corners over a 4x4 grid, round-robin by rank, so
/// a locally saturated or texture-poor region cannot monopolize the budget.
fn bucket_select(points: Vec<Point2>, width: u32, height: u32, target: usize) -> Vec<Point2> {
    const GRID: usize = 4;
    let mut buckets: Vec<Vec<Point2>> = vec![Vec::new(); GRID * GRID];
    for p in points {
        let bx = ((p.x / f64::from(width)) * GRID as f64).min(GRID as f64 - 1.0) as usize;
        let by = ((p.y / f64::from(height)) * GRID as f64).min(GRID as f64 - 1.0) as usize;
        buckets[by * GRID + bx].push(p);
    }
    let mut out = Vec::with_capacity(target);
    let mut level = 0usize;
    'fill: loop {
        let mut any = false;
        for b in &buckets {
            if let Some(p) = b.get(level) {
                out.push(*p);
                any = true;
                if out.len() == target {
                    break 'fill;
                }
            }
        }
        if !any {
            break;
        }
        level += 1;
    }
    out
}

/// [`estimate_motion`] with full control over detection and matching.
pub fn estimate_motion_with(
    a: &GrayFrame,
    b: &GrayFrame,
    cfg: &EstimatorConfig,
) -> Result<FourPointDelta, EstimationError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(EstimationError::InvalidInput(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let a_s = smooth3(a);
    let b_s = smooth3(b);
    // Over-detect, then balance spatially: a homography fit extrapolates
    // badly from corners clustered in one region.
    let detected = detect_corners(&a_s, cfg.max_corners * 4, cfg.min_corner_distance)?;
    let points = bucket_select(detected, a.width(), a.height(), cfg.max_corners);
    let matches = match_patches(&a_s, &b_s, &points, cfg.window, cfg.search_radius)?;
    if matches.len() < 8 {
        return Err(EstimationError::TooFewFeatures { found: matches.len(), need: 8 });
    }
    let (h, _) = ransac_homography(&matches, &cfg.ransac)?;
    Ok(four_point_from_matrix(&h, &a.geometry())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FrameGeometry;
    use rand::Rng;

    #[test]
    fn uniform_frame_has_no_features() {
        let f = GrayFrame::filled(64, 64, 0.5);
        assert!(matches!(
            detect_corners(&f, 100, 4.0),
            Err(EstimationError::TooFewFeatures { found: 0, .. })
        ));
    }

    #[test]
    fn small_frame_rejected() {
        let f = GrayFrame::filled(8, 8, 0.5);
        assert!(matches!(detect_corners(&f, 10, 2.0), Err(EstimationError::InvalidInput(_))));
    }

    #[test]
    fn bright_blob_center_is_strongest_corner() {
        // One strong 3x3 blob plus a faint far-away grid so at least eight
        // corners exist overall.
        let mut f = GrayFrame::filled(96, 96, 0.0);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                f.set((24 + dx) as u32, (24 + dy) as u32, 1.0);
            }
        }
        for by in 0..3u32 {
            for bx in 0..3u32 {
                f.set(60 + bx * 12, 60 + by * 12, 0.12);
            }
        }
        let pts = detect_corners(&f, 32, 3.0).unwrap();
        assert_eq!(pts[0], Point2::new(24.0, 24.0));
    }

    #[test]
    fn detection_matches_exhaustive_scan() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = GrayFrame::filled(64, 48, 0.5);
        for v in f.pixels_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let got = detect_corners(&f, 25, 5.0).unwrap();

        // Oracle: recompute the response at every pixel long-hand and run a
        // greedy full-image scan per selection step.
        let (w, h) = (f.width() as usize, f.height() as usize);
        let response_at = |x: usize, y: usize| -> f64 {
            if x < 2 || y < 2 || x >= w - 2 || y >= h - 2 {
                return 0.0;
            }
            let g = |xx: usize, yy: usize| {
                let gx = (f64::from(f.get(xx as u32 + 1, yy as u32))
                    - f64::from(f.get(xx as u32 - 1, yy as u32)))
                    / 2.0;
                let gy = (f64::from(f.get(xx as u32, yy as u32 + 1))
                    - f64::from(f.get(xx as u32, yy as u32 - 1)))
                    / 2.0;
                (gx, gy)
            };
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    let (gx, gy) = g(xx, yy);
                    sxx += gx * gx;
                    sxy += gx * gy;
                    syy += gy * gy;
                }
            }
            ((sxx + syy) - ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt()) / 2.0
        };
        let mut taken: Vec<(f64, f64)> = Vec::new();
        for _ in 0..25 {
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            for y in 0..h {
                for x in 0..w {
                    let r = response_at(x, y);
                    if r <= 1e-8 {
                        continue;
                    }
                    let far = taken
                        .iter()
                        .all(|(tx, ty)| (x as f64 - tx).powi(2) + (y as f64 - ty).powi(2) >= 25.0);
                    if !far {
                        continue;
                    }
                    let better = r > best.0
                        || (r == best.0 && (y, x) < (best.2, best.1));
                    if better {
                        best = (r, x, y);
                    }
                }
            }
            if best.0 == f64::NEG_INFINITY {
                break;
            }
            taken.push((best.1 as f64, best.2 as f64));
        }
        assert_eq!(got.len(), taken.len());
        for (g, t) in got.iter().zip(taken.iter()) {
            assert_eq!((g.x, g.y), *t);
        }
    }

    fn textured_frame(seed: u64, w: u32, h: u32) -> GrayFrame {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = GrayFrame::filled(w, h, 0.5);
        // Smooth random texture: random pixels then a 3x3 blur pass keeps
        // matching well-posed while leaving plenty of corners.
        for v in f.pixels_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let src = f.clone();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        acc += src.get((x as i64 + dx) as u32, (y as i64 + dy) as u32);
                    }
                }
                f.set(x, y, acc / 9.0);
            }
        }
        f
    }

    #[test]
    fn self_match_is_exact() {
        let f = textured_frame(2, 64, 64);
        let pts: Vec<Point2> = detect_corners(&f, 20, 5.0)
            .unwrap()
            .into_iter()
            .filter(|p| p.x >= 4.0 && p.x < 60.0 && p.y >= 4.0 && p.y < 60.0)
            .collect();
        assert!(pts.len() >= 8);
        let m = match_patches(&f, &f, &pts, 9, 4).unwrap();
        assert_eq!(m.len(), pts.len());
        for ((p, q), s) in m.pairs.iter().zip(m.scores.iter()) {
            assert_eq!(p, q);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn integer_shift_recovered() {
        let a = textured_frame(3, 80, 60);
        // b equals a shifted right by 3 pixels (content moves +x).
        let mut b = GrayFrame::filled(80, 60, 0.0);
        for y in 0..60 {
            for x in 3..80 {
                b.set(x, y, a.get(x - 3, y));
            }
        }
        let pts = detect_corners(&a, 30, 6.0).unwrap();
        let inner: Vec<Point2> = pts
            .into_iter()
            .filter(|p| p.x > 12.0 && p.x < 66.0 && p.y > 7.0 && p.y < 53.0)
            .collect();
        let m = match_patches(&a, &b, &inner, 9, 5).unwrap();
        assert!(m.len() >= inner.len() * 9 / 10);
        for (p, q) in &m.pairs {
            assert!((q.x - p.x - 3.0).abs() < 1e-9, "dx = {}", q.x - p.x);
            assert!((q.y - p.y).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_match_params_rejected() {
        let f = textured_frame(4, 32, 32);
        assert!(match_patches(&f, &f, &[], 4, 3).is_err());
        assert!(match_patches(&f, &f, &[], 3, 3).is_err());
        assert!(match_patches(&f, &f, &[], 9, 0).is_err());
    }

    fn random_pairs_from(
        g: &Homography,
        n: usize,
        seed: u64,
        noise: f64,
    ) -> CorrespondenceSet {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = CorrespondenceSet::default();
        for _ in 0..n {
            let p = Point2::new(rng.random_range(10.0..310.0), rng.random_range(10.0..230.0));
            let q = g.project(p).unwrap();
            let q = Point2::new(
                q.x + rng.random_range(-noise..=noise),
                q.y + rng.random_range(-noise..=noise),
            );
            set.push(p, q, 1.0);
        }
        set
    }

    fn random_h(seed: u64, max_disp: f64) -> Homography {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = FrameGeometry::new(320, 240);
        loop {
            let mut flat = [0.0f64; 8];
            for v in flat.iter_mut() {
                *v = rng.random_range(-max_disp..max_disp);
            }
            let d = FourPointDelta::from_flat(flat).unwrap();
            if let Ok(h) = crate::geometry::matrix_from_four_point(&d, &geom) {
                return h;
            }
        }
    }

    #[test]
    fn dlt_translation_exact() {
        let g = Homography::translation(4.0, -2.0);
        let mut set = CorrespondenceSet::default();
        for p in FrameGeometry::new(320, 240).corners() {
            set.push(p, g.project(p).unwrap(), 1.0);
        }
        let h = dlt_homography(&set).unwrap();
        for (a, b) in h.to_flat().iter().zip(g.to_flat().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dlt_recovers_exact_correspondences() {
        let g = random_h(11, 30.0);
        let set = random_pairs_from(&g, 20, 12, 0.0);
        let h = dlt_homography(&set).unwrap();
        let h_inv = h.invert().unwrap();
        for (p, q) in &set.pairs {
            assert!(symmetric_transfer_error(&h, &h_inv, *p, *q) <= 1e-6);
        }
    }

    #[test]
    fn dlt_collinear_degenerate() {
        let mut set = CorrespondenceSet::default();
        for i in 0..4 {
            let p = Point2::new(10.0 * i as f64, 20.0 * i as f64);
            set.push(p, Point2::new(p.x + 1.0, p.y + 2.0), 1.0);
        }
        assert!(matches!(
            dlt_homography(&set),
            Err(EstimationError::Geometry(GeometryError::DegenerateConfiguration { .. }))
        ));
    }

    #[test]
    fn ransac_all_inliers() {
        let g = random_h(21, 20.0);
        let set = random_pairs_from(&g, 40, 22, 0.0);
        let (h, mask) = ransac_homography(&set, &RansacConfig::default()).unwrap();
        assert!(mask.iter().all(|m| *m));
        let h_inv = h.invert().unwrap();
        for (p, q) in &set.pairs {
            assert!(symmetric_transfer_error(&h, &h_inv, *p, *q) <= 1e-6);
        }
    }

    #[test]
    fn ransac_rejects_outliers() {
        use rand::SeedableRng;
        let g = random_h(31, 15.0);
        let mut set = random_pairs_from(&g, 60, 32, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n_in = set.len();
        for _ in 0..40 {
            set.push(
                Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)),
                Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)),
                1.0,
            );
        }
        let (h, mask) = ransac_homography(&set, &RansacConfig::default()).unwrap();
        let recall =
            mask[..n_in].iter().filter(|m| **m).count() as f64 / n_in as f64;
        assert!(recall >= 0.95, "recall {recall}");
        let h_inv = h.invert().unwrap();
        let geom = FrameGeometry::new(320, 240);
        for p in geom.corners() {
            let err = symmetric_transfer_error(&h, &h_inv, p, g.project(p).unwrap());
            assert!(err <= 0.5, "transfer error {err}");
        }
    }

    #[test]
    fn ransac_no_consensus_when_mostly_outliers() {
        use rand::SeedableRng;
        let g = random_h(41, 10.0);
        let mut set = random_pairs_from(&g, 4, 42, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..36 {
            set.push(
                Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)),
                Point2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)),
                1.0,
            );
        }
        let cfg = RansacConfig { min_inlier_ratio: 0.5, ..RansacConfig::default() };
        assert!(matches!(
            ransac_homography(&set, &cfg),
            Err(EstimationError::NoConsensus { .. })
        ));
    }

    #[test]
    fn ransac_deterministic() {
        let g = random_h(51, 12.0);
        let set = random_pairs_from(&g, 50, 52, 0.3);
        let cfg = RansacConfig::default();
        let (h1, m1) = ransac_homography(&set, &cfg).unwrap();
        let (h2, m2) = ransac_homography(&set, &cfg).unwrap();
        assert_eq!(h1.to_flat(), h2.to_flat());
        assert_eq!(m1, m2);
    }

    #[test]
    fn identical_frames_estimate_zero_motion() {
        let f = textured_frame(61, 128, 96);
        let d = estimate_motion(&f, &f, &RansacConfig::default()).unwrap();
        assert!(d.max_corner_error(&FourPointDelta::zero()) <= 0.2);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let a = textured_frame(71, 64, 64);
        let b = textured_frame(71, 64, 48);
        assert!(matches!(
            estimate_motion(&a, &b, &RansacConfig::default()),
            Err(EstimationError::InvalidInput(_))
        ));
    }
}
