//! Projective homography algebra and the four-point corner-displacement
//! parameterization used throughout the pipeline.
//!
//! All coordinates are pixel coordinates (x right, y down). A homography acts
//! on homogeneous pixel coordinates and is stored at canonical scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Determinant magnitude below which a matrix is treated as singular.
pub const DET_EPS: f64 = 1e-12;
/// Homogeneous w-component magnitude below which a projection is degenerate.
pub const PROJ_W_EPS: f64 = 1e-12;
/// Pivot-ratio limit of the 4-point solve above which the configuration is
/// reported as degenerate.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("projection is degenerate (|w| <= {PROJ_W_EPS})")]
    DegenerateProjection,
    #[error("degenerate point configuration (pivot ratio {ratio:.3e} exceeds {CONDITION_LIMIT:.0e})")]
    DegenerateConfiguration { ratio: f64 },
    #[error("matrix is singular (|det| <= {DET_EPS})")]
    Singular,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// A 2D pixel-space point or displacement vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl std::ops::Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Reference frame dimensions with the four corner reference points.
///
/// Corners are ordered TL, TR, BR, BL; the center is `((W-1)/2, (H-1)/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub width: u32,
    pub height: u32,
}

impl FrameGeometry {
    /// Panics if either dimension is below 2.
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 2 && height >= 2, "frame must be at least 2x2");
        Self { width, height }
    }

    pub fn corners(&self) -> [Point2; 4] {
        let w = f64::from(self.width) - 1.0;
        let h = f64::from(self.height) - 1.0;
        [
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h),
            Point2::new(0.0, h),
        ]
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            (f64::from(self.width) - 1.0) / 2.0,
            (f64::from(self.height) - 1.0) / 2.0,
        )
    }

    /// Geometry with width and height exchanged (after a 90/270 rotation).
    pub fn transposed(&self) -> Self {
        Self { width: self.height, height: self.width }
    }
}

/// A 3x3 projective homography acting on homogeneous pixel coordinates.
///
/// Stored at canonical scale: `m[2][2] == 1` whenever that entry is
/// non-negligible, otherwise unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 9]", try_from = "[f64; 9]")]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    /// Builds a homography from row-major entries, normalizing the scale.
    /// Fails if the matrix is singular or contains non-finite values.
    pub fn from_rows(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        for row in &m {
            for v in row {
                if !v.is_finite() {
                    return Err(GeometryError::NonFinite("homography entry"));
                }
            }
        }
        let h = Self { m }.normalized();
        if h.det().abs() <= DET_EPS {
            return Err(GeometryError::Singular);
        }
        Ok(h)
    }

    pub fn from_flat(v: [f64; 9]) -> Result<Self, GeometryError> {
        Self::from_rows([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]] }
    }

    /// Row-major 3x3 entries at canonical scale.
    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    /// Row-major flattening `[m00, m01, m02, m10, ...]`.
    pub fn to_flat(&self) -> [f64; 9] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// True when the stored scale is the affine-style `m[2][2] == 1`.
    pub fn has_canonical_scale(&self) -> bool {
        self.m[2][2] == 1.0
    }

    fn normalized(self) -> Self {
        let mut m = self.m;
        let w = m[2][2];
        if w.abs() > DET_EPS {
            for row in &mut m {
                for v in row.iter_mut() {
                    *v /= w;
                }
            }
            m[2][2] = 1.0;
        } else {
            // Degenerate scale: fall back to unit Frobenius norm with a
            // deterministic sign (first entry of largest magnitude positive).
            let frob: f64 = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            if frob > 0.0 {
                let lead = *m
                    .iter()
                    .flatten()
                    .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                    .unwrap();
                let sign = if lead < 0.0 { -1.0 } else { 1.0 };
                for row in &mut m {
                    for v in row.iter_mut() {
                        *v *= sign / frob;
                    }
                }
            }
        }
        Self { m }
    }

    /// Projects a point: returns `(x/w, y/w)` of `m * (px, py, 1)`.
    pub fn project(&self, p: Point2) -> Result<Point2, GeometryError> {
        let m = &self.m;
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= PROJ_W_EPS {
            return Err(GeometryError::DegenerateProjection);
        }
        Ok(Point2::new(x / w, y / w))
    }

    /// Normalized matrix product `self * other`, so that projecting through
    /// the result equals projecting through `other` then `self`.
    pub fn compose(&self, other: &Homography) -> Homography {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        (Homography { m }).normalized()
    }

    /// Normalized inverse via the adjugate.
    pub fn invert(&self) -> Result<Homography, GeometryError> {
        let det = self.det();
        if det.abs() <= DET_EPS {
            return Err(GeometryError::Singular);
        }
        let m = &self.m;
        let inv = [
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
            ],
        ];
        Ok((Homography { m: inv }).normalized())
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_flat()
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = GeometryError;
    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Homography::from_flat(v)
    }
}

/// Forward corner displacements `d_i = project(G, p_i) - p_i` in pixels,
/// ordered TL, TR, BR, BL of the reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 8]", try_from = "[f64; 8]")]
pub struct FourPointDelta {
    d: [Point2; 4],
}

impl FourPointDelta {
    pub fn new(d: [Point2; 4]) -> Result<Self, GeometryError> {
        if d.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite("corner displacement"));
        }
        Ok(Self { d })
    }

    pub fn zero() -> Self {
        Self { d: [Point2::new(0.0, 0.0); 4] }
    }

    /// The same displacement at every corner (a pure translation).
    pub fn uniform(dx: f64, dy: f64) -> Self {
        Self { d: [Point2::new(dx, dy); 4] }
    }

    pub fn corners(&self) -> [Point2; 4] {
        self.d
    }

    pub fn corner(&self, i: usize) -> Point2 {
        self.d[i]
    }

    /// Flat serialization order `[d0x, d0y, d1x, d1y, d2x, d2y, d3x, d3y]`.
    pub fn to_flat(&self) -> [f64; 8] {
        let d = &self.d;
        [d[0].x, d[0].y, d[1].x, d[1].y, d[2].x, d[2].y, d[3].x, d[3].y]
    }

    pub fn from_flat(v: [f64; 8]) -> Result<Self, GeometryError> {
        Self::new([
            Point2::new(v[0], v[1]),
            Point2::new(v[2], v[3]),
            Point2::new(v[4], v[5]),
            Point2::new(v[6], v[7]),
        ])
    }

    /// The sign-flipped form `p_i - p'_i` (documentation parity with the
    /// reverse displacement convention; this crate stores forward motion).
    pub fn paper_sign(&self) -> [Point2; 4] {
        [-self.d[0], -self.d[1], -self.d[2], -self.d[3]]
    }

    /// Mean Euclidean distance between this delta's corners and another's.
    pub fn corner_error(&self, other: &FourPointDelta) -> f64 {
        self.d
            .iter()
            .zip(other.d.iter())
            .map(|(a, b)| (*a - *b).norm())
            .sum::<f64>()
            / 4.0
    }

    /// Largest per-corner deviation from another delta.
    pub fn max_corner_error(&self, other: &FourPointDelta) -> f64 {
        self.d
            .iter()
            .zip(other.d.iter())
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max)
    }
}

impl From<FourPointDelta> for [f64; 8] {
    fn from(d: FourPointDelta) -> Self {
        d.to_flat()
    }
}

impl TryFrom<[f64; 8]> for FourPointDelta {
    type Error = GeometryError;
    fn try_from(v: [f64; 8]) -> Result<Self, Self::Error> {
        FourPointDelta::from_flat(v)
    }
}

/// Corner displacements of `g` relative to the reference corners of `geom`.
pub fn four_point_from_matrix(
    g: &Homography,
    geom: &FrameGeometry,
) -> Result<FourPointDelta, GeometryError> {
    let corners = geom.corners();
    let mut d = [Point2::new(0.0, 0.0); 4];
    for (i, p) in corners.iter().enumerate() {
        d[i] = g.project(*p)? - *p;
    }
    FourPointDelta::new(d)
}

/// Recovers the homography mapping each reference corner `p_i` of `geom` to
/// `p_i + d_i` via an exact four-correspondence solve.
pub fn matrix_from_four_point(
    d: &FourPointDelta,
    geom: &FrameGeometry,
) -> Result<Homography, GeometryError> {
    let corners = geom.corners();
    let mut pairs = [(Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)); 4];
    for (i, p) in corners.iter().enumerate() {
        pairs[i] = (*p, *p + d.corner(i));
    }
    homography_from_four_pairs(&pairs)
}

/// Similarity transform moving a point set to centroid zero and RMS radius
/// sqrt(2), returned together with its inverse.
pub(crate) fn normalizing_similarity(
    points: &[Point2],
) -> Result<(Homography, Homography), GeometryError> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let rms = (points
        .iter()
        .map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if rms <= 1e-12 {
        // All points coincide.
        return Err(GeometryError::DegenerateConfiguration { ratio: f64::INFINITY });
    }
    let s = std::f64::consts::SQRT_2 / rms;
    let t = Homography::from_rows([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])?;
    let t_inv = Homography::from_rows([
        [1.0 / s, 0.0, cx],
        [0.0, 1.0 / s, cy],
        [0.0, 0.0, 1.0],
    ])?;
    Ok((t, t_inv))
}

/// Exact homography through four point correspondences `(p, q)`, solved as
/// the null space of the stacked 8x9 constraint matrix with full pivoting.
/// Point sets are similarity-normalized before solving for conditioning.
pub fn homography_from_four_pairs(
    pairs: &[(Point2, Point2); 4],
) -> Result<Homography, GeometryError> {
    let src: Vec<Point2> = pairs.iter().map(|(p, _)| *p).collect();
    let dst: Vec<Point2> = pairs.iter().map(|(_, q)| *q).collect();
    for p in src.iter().chain(dst.iter()) {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite("correspondence"));
        }
    }
    let (t_src, _) = normalizing_similarity(&src)?;
    let (t_dst, t_dst_inv) = normalizing_similarity(&dst)?;

    // Stack the two DLT constraint rows per correspondence.
    let mut a = [[0.0f64; 9]; 8];
    for (i, (p, q)) in pairs.iter().enumerate() {
        let pn = t_src.project(*p)?;
        let qn = t_dst.project(*q)?;
        let r0 = 2 * i;
        a[r0][0] = pn.x;
        a[r0][1] = pn.y;
        a[r0][2] = 1.0;
        a[r0][6] = -pn.x * qn.x;
        a[r0][7] = -pn.y * qn.x;
        a[r0][8] = -qn.x;
        let r1 = 2 * i + 1;
        a[r1][3] = pn.x;
        a[r1][4] = pn.y;
        a[r1][5] = 1.0;
        a[r1][6] = -pn.x * qn.y;
        a[r1][7] = -pn.y * qn.y;
        a[r1][8] = -qn.y;
    }

    let h = null_space_8x9(&mut a)?;
    let g_norm = Homography::from_rows([
        [h[0], h[1], h[2]],
        [h[3], h[4], h[5]],
        [h[6], h[7], h[8]],
    ])
    .map_err(|_| GeometryError::DegenerateConfiguration { ratio: f64::INFINITY })?;
    let g = t_dst_inv.compose(&g_norm).compose(&t_src);
    if g.det().abs() <= DET_EPS {
        return Err(GeometryError::DegenerateConfiguration { ratio: f64::INFINITY });
    }
    Ok(g)
}

/// One-dimensional null vector of an 8x9 system via Gaussian elimination with
/// full pivoting. Reports rank deficiency through the pivot-magnitude ratio.
fn null_space_8x9(a: &mut [[f64; 9]; 8]) -> Result<[f64; 9], GeometryError> {
    let mut col_perm: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    let mut pivot_max = 0.0f64;
    let mut pivot_min = f64::INFINITY;

    for k in 0..8 {
        // Full pivot search over the remaining submatrix.
        let (mut best, mut bi, mut bj) = (0.0f64, k, k);
        for i in k..8 {
            for j in k..9 {
                let v = a[i][col_perm[j]].abs();
                if v > best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= f64::MIN_POSITIVE {
            return Err(GeometryError::DegenerateConfiguration { ratio: f64::INFINITY });
        }
        a.swap(k, bi);
        col_perm.swap(k, bj);
        pivot_max = pivot_max.max(best);
        pivot_min = pivot_min.min(best);

        let pk = a[k][col_perm[k]];
        for i in (k + 1)..8 {
            let f = a[i][col_perm[k]] / pk;
            if f != 0.0 {
                for j in k..9 {
                    let c = col_perm[j];
                    a[i][c] -= f * a[k][c];
                }
            }
        }
    }

    let ratio = pivot_max / pivot_min;
    if ratio > CONDITION_LIMIT {
        return Err(GeometryError::DegenerateConfiguration { ratio });
    }

    // Free variable on the last permuted column, back-substitute the rest.
    let mut v = [0.0f64; 9];
    v[8] = 1.0;
    for k in (0..8).rev() {
        let mut s = a[k][col_perm[8]];
        for j in (k + 1)..8 {
            s += a[k][col_perm[j]] * v[j];
        }
        v[k] = -s / a[k][col_perm[k]];
    }
    let mut x = [0.0f64; 9];
    for (j, &c) in col_perm.iter().enumerate() {
        x[c] = v[j];
    }
    Ok(x)
}
