//! Interpretable motion classes for four-point deltas and dataset-level
//! motion distributions.
//!
//! A delta is Static below the magnitude threshold, then tested for
//! unanimous directional dominance, then radial (zoom) and tangential
//! (rotation) dominance about the frame center, and is Mixed otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FourPointDelta, FrameGeometry, Point2};
use crate::sampling::MotionTrack;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("track has no present motion entries")]
    EmptyTrack,
}

/// Exactly one label per delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Up,
    Down,
    Left,
    Right,
    ZoomIn,
    ZoomOut,
    RotateLeft,
    RotateRight,
    Mixed,
    Static,
}

impl MotionClass {
    pub const ALL: [MotionClass; 10] = [
        MotionClass::Up,
        MotionClass::Down,
        MotionClass::Left,
        MotionClass::Right,
        MotionClass::ZoomIn,
        MotionClass::ZoomOut,
        MotionClass::RotateLeft,
        MotionClass::RotateRight,
        MotionClass::Mixed,
        MotionClass::Static,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Up => "up",
            MotionClass::Down => "down",
            MotionClass::Left => "left",
            MotionClass::Right => "right",
            MotionClass::ZoomIn => "zoom_in",
            MotionClass::ZoomOut => "zoom_out",
            MotionClass::RotateLeft => "rotate_left",
            MotionClass::RotateRight => "rotate_right",
            MotionClass::Mixed => "mixed",
            MotionClass::Static => "static",
        }
    }

    pub fn from_name(name: &str) -> Option<MotionClass> {
        MotionClass::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Class after mirroring the frame left-right.
    pub fn mirrored_horizontal(self) -> MotionClass {
        match self {
            MotionClass::Left => MotionClass::Right,
            MotionClass::Right => MotionClass::Left,
            MotionClass::RotateLeft => MotionClass::RotateRight,
            MotionClass::RotateRight => MotionClass::RotateLeft,
            other => other,
        }
    }

    fn index(self) -> usize {
        MotionClass::ALL.iter().position(|c| *c == self).unwrap()
    }
}

/// Mean Euclidean corner displacement in pixels.
pub fn motion_magnitude(d: &FourPointDelta) -> f64 {
    d.corners().iter().map(|c| c.norm()).sum::<f64>() / 4.0
}

/// Assigns the single motion class of a delta given the dataset threshold
/// `sigma`. Classes are tested in order Static, translations, zooms,
/// rotations, Mixed.
pub fn classify(d: &FourPointDelta, sigma: f64, geom: &FrameGeometry) -> MotionClass {
    assert!(sigma > 0.0, "sigma must be positive");
    if motion_magnitude(d) < sigma {
        return MotionClass::Static;
    }
    let corners = d.corners();

    let all = |f: &dyn Fn(Point2) -> bool| corners.iter().all(|c| f(*c));
    if all(&|c| c.x > 0.0 && c.x > c.y.abs()) {
        return MotionClass::Right;
    }
    if all(&|c| c.x < 0.0 && -c.x > c.y.abs()) {
        return MotionClass::Left;
    }
    if all(&|c| c.y < 0.0 && -c.y > c.x.abs()) {
        return MotionClass::Up;
    }
    if all(&|c| c.y > 0.0 && c.y > c.x.abs()) {
        return MotionClass::Down;
    }

    // Radial/tangential decomposition about the frame center. `tangent` is
    // the counter-clockwise direction as seen on screen (y down).
    let center = geom.center();
    let mut radial = [0.0f64; 4];
    let mut tangential = [0.0f64; 4];
    for (i, p) in geom.corners().iter().enumerate() {
        let r = *p - center;
        let n = r.norm();
        let r = Point2::new(r.x / n, r.y / n);
        let tangent = Point2::new(r.y, -r.x);
        radial[i] = corners[i].dot(r);
        tangential[i] = corners[i].dot(tangent);
    }
    if (0..4).all(|i| radial[i] > 0.0 && radial[i] > tangential[i].abs()) {
        return MotionClass::ZoomOut;
    }
    if (0..4).all(|i| radial[i] < 0.0 && -radial[i] > tangential[i].abs()) {
        return MotionClass::ZoomIn;
    }
    if (0..4).all(|i| tangential[i] > 0.0 && tangential[i] > radial[i].abs()) {
        return MotionClass::RotateLeft;
    }
    if (0..4).all(|i| tangential[i] < 0.0 && -tangential[i] > radial[i].abs()) {
        return MotionClass::RotateRight;
    }
    MotionClass::Mixed
}

/// Per-class counts over the present entries of a track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionDistribution {
    counts: [usize; 10],
    pub total: usize,
    pub missing: usize,
    pub sigma_used: f64,
}

impl MotionDistribution {
    pub fn count(&self, class: MotionClass) -> usize {
        self.counts[class.index()]
    }

    pub fn fraction(&self, class: MotionClass) -> f64 {
        self.counts[class.index()] as f64 / self.total as f64
    }

    /// JSON report `{class: {count, fraction}}` over the ten classes.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = BTreeMap::new();
        for class in MotionClass::ALL {
            map.insert(
                class.name(),
                serde_json::json!({
                    "count": self.count(class),
                    "fraction": self.fraction(class),
                }),
            );
        }
        serde_json::json!({
            "classes": map,
            "total": self.total,
            "missing": self.missing,
            "sigma": self.sigma_used,
        })
    }

    /// CSV body with one `class,count,fraction` row per class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,count,fraction\n");
        for class in MotionClass::ALL {
            s.push_str(&format!(
                "{},{},{}\n",
                class.name(),
                self.count(class),
                self.fraction(class)
            ));
        }
        s
    }

    /// Minimal SVG bar chart of the class fractions.
    pub fn to_svg(&self) -> String {
        let bar_w = 52.0;
        let chart_h = 220.0;
        let width = bar_w * 10.0 + 60.0;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"300\">\n",
            width
        );
        s.push_str("<style>text{font:10px sans-serif;}</style>\n");
        for (i, class) in MotionClass::ALL.iter().enumerate() {
            let frac = self.fraction(*class);
            let h = frac * chart_h;
            let x = 40.0 + i as f64 * bar_w;
            s.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4878cf\"/>\n",
                x,
                20.0 + chart_h - h,
                bar_w - 8.0,
                h
            ));
            s.push_str(&format!(
                "<text x=\"{:.1}\" y=\"255\" transform=\"rotate(45 {:.1} 255)\">{}</text>\n",
                x,
                x,
                class.name()
            ));
            s.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\">{:.1}%</text>\n",
                x,
                12.0 + chart_h - h,
                frac * 100.0
            ));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Classifies every present entry of a track.
pub fn distribution(
    track: &MotionTrack,
    sigma: f64,
    geom: &FrameGeometry,
) -> Result<MotionDistribution, ClassifyError> {
    distribution_over(track.present_deltas().map(|(_, d)| d), track.missing_count(), sigma, geom)
}

/// Classifies an iterator of deltas (several tracks can be chained).
pub fn distribution_over<'a>(
    deltas: impl Iterator<Item = &'a FourPointDelta>,
    missing: usize,
    sigma: f64,
    geom: &FrameGeometry,
) -> Result<MotionDistribution, ClassifyError> {
    let mut counts = [0usize; 10];
    let mut total = 0usize;
    for d in deltas {
        counts[classify(d, sigma, geom).index()] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(ClassifyError::EmptyTrack);
    }
    Ok(MotionDistribution { counts, total, missing, sigma_used: sigma })
}
