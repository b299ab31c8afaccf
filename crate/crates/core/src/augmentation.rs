//! Sequence-consistent augmentation.
//!
//! Geometric transforms are exact pixel permutations applied to every frame
//! of a sequence; the motion targets follow by conjugation `T * G * T^-1`
//! instead of re-running the estimator. Photometric transforms only ever
//! touch the predictor branch; the estimator must see untouched frames.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::GrayFrame;
use crate::geometry::{
    four_point_from_matrix, matrix_from_four_point, FourPointDelta, FrameGeometry, GeometryError,
    Homography,
};

#[derive(Debug, Error)]
pub enum AugmentationError {
    #[error("parameter {name} = {value} outside its allowed range")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("frames in a sequence must share one size")]
    SizeMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The six exact pixel-permutation transforms. Rotations are clockwise on
/// screen (y down) and swap the frame dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricTransform {
    Identity,
    FlipH,
    FlipV,
    Rotate90,
    Rotate180,
    Rotate270,
}

impl GeometricTransform {
    pub const ALL: [GeometricTransform; 6] = [
        GeometricTransform::Identity,
        GeometricTransform::FlipH,
        GeometricTransform::FlipV,
        GeometricTransform::Rotate90,
        GeometricTransform::Rotate180,
        GeometricTransform::Rotate270,
    ];

    /// Geometry of a transformed frame.
    pub fn output_geometry(&self, geom: &FrameGeometry) -> FrameGeometry {
        match self {
            GeometricTransform::Rotate90 | GeometricTransform::Rotate270 => geom.transposed(),
            _ => *geom,
        }
    }

    /// The induced pixel-coordinate map from the original frame into the
    /// transformed frame.
    pub fn as_matrix(&self, geom: &FrameGeometry) -> Homography {
        let w = f64::from(geom.width) - 1.0;
        let h = f64::from(geom.height) - 1.0;
        let rows = match self {
            GeometricTransform::Identity => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            GeometricTransform::FlipH => [[-1.0, 0.0, w], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            GeometricTransform::FlipV => [[1.0, 0.0, 0.0], [0.0, -1.0, h], [0.0, 0.0, 1.0]],
            // x' = (H-1) - y, y' = x
            GeometricTransform::Rotate90 => [[0.0, -1.0, h], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            GeometricTransform::Rotate180 => [[-1.0, 0.0, w], [0.0, -1.0, h], [0.0, 0.0, 1.0]],
            // x' = y, y' = (W-1) - x
            GeometricTransform::Rotate270 => [[0.0, 1.0, 0.0], [-1.0, 0.0, w], [0.0, 0.0, 1.0]],
        };
        Homography::from_rows(rows).expect("frame maps are invertible")
    }

    /// Applies the exact pixel permutation to one frame.
    pub fn apply_frame(&self, f: &GrayFrame) -> GrayFrame {
        let (w, h) = (f.width(), f.height());
        let out_geom = self.output_geometry(&f.geometry());
        let (ow, oh) = (out_geom.width, out_geom.height);
        let mut out = vec![0.0f32; ow as usize * oh as usize];
        for oy in 0..oh {
            for ox in 0..ow {
                let (x, y) = match self {
                    GeometricTransform::Identity => (ox, oy),
                    GeometricTransform::FlipH => (w - 1 - ox, oy),
                    GeometricTransform::FlipV => (ox, h - 1 - oy),
                    // Inverse of x' = (H-1)-y, y' = x.
                    GeometricTransform::Rotate90 => (oy, h - 1 - ox),
                    GeometricTransform::Rotate180 => (w - 1 - ox, h - 1 - oy),
                    // Inverse of x' = y, y' = (W-1)-x.
                    GeometricTransform::Rotate270 => (w - 1 - oy, ox),
                };
                out[oy as usize * ow as usize + ox as usize] = f.get(x, y);
            }
        }
        GrayFrame::new(ow, oh, out).expect("permutation preserves range")
    }
}

/// Transforms every frame of a sequence by the same `t`.
pub fn apply_geometric_sequence(
    frames: &[GrayFrame],
    t: GeometricTransform,
) -> Result<Vec<GrayFrame>, AugmentationError> {
    if let Some(first) = frames.first() {
        if frames
            .iter()
            .any(|f| f.width() != first.width() || f.height() != first.height())
        {
            return Err(AugmentationError::SizeMismatch);
        }
    }
    Ok(frames.iter().map(|f| t.apply_frame(f)).collect())
}

/// Conjugates a motion delta into the transformed frame: if the frames
/// transform by `T`, the inter-frame homography transforms as `T G T^-1`.
pub fn conjugate_motion(
    d: &FourPointDelta,
    t: GeometricTransform,
    geom: &FrameGeometry,
) -> Result<FourPointDelta, AugmentationError> {
    let t_matrix = t.as_matrix(geom);
    let out_geom = t.output_geometry(geom);
    conjugate_motion_by_matrix(d, &t_matrix, geom, &out_geom)
}

/// Conjugation by an arbitrary invertible pixel-coordinate map, used for
/// composed transforms.
pub fn conjugate_motion_by_matrix(
    d: &FourPointDelta,
    t_matrix: &Homography,
    geom_in: &FrameGeometry,
    geom_out: &FrameGeometry,
) -> Result<FourPointDelta, AugmentationError> {
    let g = matrix_from_four_point(d, geom_in)?;
    let conj = t_matrix.compose(&g).compose(&t_matrix.invert()?);
    Ok(four_point_from_matrix(&conj, geom_out)?)
}

/// Photometric transforms for the predictor branch; outputs always clamp to
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotometricTransform {
    Identity,
    /// Multiplies intensities by alpha in [0.5, 1.5].
    Gain(f64),
    /// Adds beta in [-0.2, 0.2].
    Bias(f64),
    /// Raises intensities to gamma in [0.5, 2.0].
    GammaAdjust(f64),
    /// Adds Gaussian noise with sigma in [0, 0.05], seeded.
    GaussianNoise { sigma: f64, seed: u64 },
}

impl PhotometricTransform {
    pub fn validate(&self) -> Result<(), AugmentationError> {
        let bad = |name, value| Err(AugmentationError::ParameterOutOfRange { name, value });
        match *self {
            PhotometricTransform::Identity => Ok(()),
            PhotometricTransform::Gain(a) => {
                if !(0.5..=1.5).contains(&a) {
                    return bad("gain", a);
                }
                Ok(())
            }
            PhotometricTransform::Bias(b) => {
                if !(-0.2..=0.2).contains(&b) {
                    return bad("bias", b);
                }
                Ok(())
            }
            PhotometricTransform::GammaAdjust(g) => {
                if !(0.5..=2.0).contains(&g) {
                    return bad("gamma", g);
                }
                Ok(())
            }
            PhotometricTransform::GaussianNoise { sigma, .. } => {
                if !(0.0..=0.05).contains(&sigma) {
                    return bad("noise_sigma", sigma);
                }
                Ok(())
            }
        }
    }
}

/// Applies one photometric transform (same parameters) across a sequence.
/// The noise stream continues over the frames, so each frame gets fresh but
/// reproducible noise.
pub fn apply_photometric_sequence(
    frames: &[GrayFrame],
    t: &PhotometricTransform,
) -> Result<Vec<GrayFrame>, AugmentationError> {
    t.validate()?;
    match *t {
        PhotometricTransform::Identity => Ok(frames.to_vec()),
        PhotometricTransform::Gain(a) => Ok(map_pixels(frames, |v| v * a as f32)),
        PhotometricTransform::Bias(b) => Ok(map_pixels(frames, |v| v + b as f32)),
        PhotometricTransform::GammaAdjust(g) => {
            Ok(map_pixels(frames, |v| f64::from(v).powf(g) as f32))
        }
        PhotometricTransform::GaussianNoise { sigma, seed } => {
            let normal = Normal::new(0.0f64, sigma.max(1e-12)).expect("validated sigma");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(frames
                .iter()
                .map(|f| {
                    let pixels = f
                        .pixels()
                        .iter()
                        .map(|v| {
                            (f64::from(*v) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32
                        })
                        .collect();
                    GrayFrame::new(f.width(), f.height(), pixels).expect("clamped")
                })
                .collect())
        }
    }
}

fn map_pixels(frames: &[GrayFrame], op: impl Fn(f32) -> f32) -> Vec<GrayFrame> {
    frames
        .iter()
        .map(|f| {
            let pixels = f.pixels().iter().map(|v| op(*v).clamp(0.0, 1.0)).collect();
            GrayFrame::new(f.width(), f.height(), pixels).expect("clamped")
        })
        .collect()
}

/// Draws a random (geometric, photometric) pair: kinds uniform, parameters
/// uniform over their ranges. Photometric sampling collapses to Identity
/// when disabled.
pub fn sample_augmentation(
    seed: u64,
    enable_photometric: bool,
) -> (GeometricTransform, PhotometricTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometric = GeometricTransform::ALL[rng.random_range(0..6usize)];
    let photometric = if enable_photometric {
        match rng.random_range(0..5usize) {
            0 => PhotometricTransform::Identity,
            1 => PhotometricTransform::Gain(rng.random_range(0.5..=1.5)),
            2 => PhotometricTransform::Bias(rng.random_range(-0.2..=0.2)),
            3 => PhotometricTransform::GammaAdjust(rng.random_range(0.5..=2.0)),
            _ => PhotometricTransform::GaussianNoise {
                sigma: rng.random_range(0.0..=0.05),
                seed: rng.random(),
            },
        }
    } else {
        PhotometricTransform::Identity
    };
    (geometric, photometric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify, MotionClass};
    use crate::estimation::{estimate_motion, RansacConfig};
    use crate::geometry::Point2;
    use crate::synthetic::{generate_scene, random_four_point, render_pair, RenderOptions};
    use rand::Rng;
    use rand::SeedableRng;

    fn geom() -> FrameGeometry {
        FrameGeometry::new(320, 240)
    }

    fn seeded_frame(seed: u64, w: u32, h: u32) -> GrayFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..w as usize * h as usize).map(|_| rng.random_range(0.0..1.0)).collect();
        GrayFrame::new(w, h, pixels).unwrap()
    }

    #[test]
    fn identity_sequence_is_bit_identical() {
        let frames = vec![seeded_frame(1, 32, 24), seeded_frame(2, 32, 24)];
        let out = apply_geometric_sequence(&frames, GeometricTransform::Identity).unwrap();
        assert_eq!(out, frames);
    }

    #[test]
    fn fliph_is_involution() {
        let f = seeded_frame(3, 33, 21);
        let once = GeometricTransform::FlipH.apply_frame(&f);
        let twice = GeometricTransform::FlipH.apply_frame(&once);
        assert_eq!(twice, f);
    }

    #[test]
    fn rotate90_four_times_is_original() {
        let f = seeded_frame(4, 40, 24);
        let mut g = f.clone();
        for _ in 0..4 {
            g = GeometricTransform::Rotate90.apply_frame(&g);
        }
        assert_eq!(g, f);
    }

    #[test]
    fn matrix_agrees_with_pixel_permutation() {
        let f = seeded_frame(5, 20, 14);
        let g = f.geometry();
        for t in GeometricTransform::ALL {
            let out = t.apply_frame(&f);
            let m = t.as_matrix(&g);
            for (x, y) in [(0u32, 0u32), (7, 3), (19, 13), (4, 9)] {
                let p = m.project(Point2::new(f64::from(x), f64::from(y))).unwrap();
                let v = out.get(p.x.round() as u32, p.y.round() as u32);
                assert_eq!(v, f.get(x, y), "{t:?} at ({x},{y})");
            }
        }
    }

    #[test]
    fn mixed_sizes_rejected() {
        let frames = vec![seeded_frame(1, 32, 24), seeded_frame(2, 16, 24)];
        assert!(matches!(
            apply_geometric_sequence(&frames, GeometricTransform::FlipH),
            Err(AugmentationError::SizeMismatch)
        ));
    }

    #[test]
    fn conjugate_identity_keeps_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_four_point(&mut rng, 10.0);
        let c = conjugate_motion(&d, GeometricTransform::Identity, &geom()).unwrap();
        assert!(d.max_corner_error(&c) < 1e-9);
    }

    #[test]
    fn fliph_turns_right_motion_left() {
        let d = FourPointDelta::uniform(5.0, 0.0);
        let c = conjugate_motion(&d, GeometricTransform::FlipH, &geom()).unwrap();
        assert!(c.max_corner_error(&FourPointDelta::uniform(-5.0, 0.0)) < 1e-9);
    }

    #[test]
    fn conjugation_matches_reestimation_on_transformed_frames() {
        let scene = generate_scene(40, 1024);
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let h = crate::synthetic::random_homography(&mut rng, &g, 8.0);
        let truth = crate::geometry::four_point_from_matrix(&h, &g).unwrap();
        let (a, b) = render_pair(&scene, &h, &g, &RenderOptions::default()).unwrap();
        for t in [GeometricTransform::FlipV, GeometricTransform::Rotate90] {
            let ta = t.apply_frame(&a);
            let tb = t.apply_frame(&b);
            let estimated = estimate_motion(&ta, &tb, &RansacConfig::default()).unwrap();
            let conjugated = conjugate_motion(&truth, t, &g).unwrap();
            let err = estimated.corner_error(&conjugated);
            assert!(err <= 0.5, "{t:?} mean corner error {err}");
        }
    }

    #[test]
    fn conjugation_is_a_group_action() {
        let g0 = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for t1 in GeometricTransform::ALL {
            for t2 in GeometricTransform::ALL {
                let d = random_four_point(&mut rng, 8.0);
                let g1 = t1.output_geometry(&g0);
                let g2 = t2.output_geometry(&g1);
                let step = conjugate_motion(&d, t1, &g0).unwrap();
                let step = conjugate_motion(&step, t2, &g1).unwrap();
                let combined = t2.as_matrix(&g1).compose(&t1.as_matrix(&g0));
                let direct = conjugate_motion_by_matrix(&d, &combined, &g0, &g2).unwrap();
                assert!(
                    step.max_corner_error(&direct) <= 1e-9,
                    "{t1:?} then {t2:?}: {}",
                    step.max_corner_error(&direct)
                );
            }
        }
    }

    #[test]
    fn label_equivariance_under_fliph() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let d = random_four_point(&mut rng, 6.0);
            let flipped = conjugate_motion(&d, GeometricTransform::FlipH, &g).unwrap();
            let expect = classify(&d, 1.0, &g).mirrored_horizontal();
            assert_eq!(classify(&flipped, 1.0, &g), expect);
        }
        // And for a delta that lands on a pure class.
        let right = FourPointDelta::uniform(5.0, 0.0);
        let flipped = conjugate_motion(&right, GeometricTransform::FlipH, &g).unwrap();
        assert_eq!(classify(&flipped, 1.0, &g), MotionClass::Left);
    }

    #[test]
    fn photometric_identity_and_gain() {
        let frames = vec![seeded_frame(9, 16, 12)];
        let out = apply_photometric_sequence(&frames, &PhotometricTransform::Identity).unwrap();
        assert_eq!(out, frames);
        let out = apply_photometric_sequence(&frames, &PhotometricTransform::Gain(1.0)).unwrap();
        assert_eq!(out, frames);

        // Gain clamps exactly where 1.5*v exceeds 1.
        let out = apply_photometric_sequence(&frames, &PhotometricTransform::Gain(1.5)).unwrap();
        for (o, i) in out[0].pixels().iter().zip(frames[0].pixels().iter()) {
            assert_eq!(*o, (i * 1.5).min(1.0));
        }
    }

    #[test]
    fn photometric_range_checks() {
        assert!(PhotometricTransform::Gain(2.0).validate().is_err());
        assert!(PhotometricTransform::Bias(0.5).validate().is_err());
        assert!(PhotometricTransform::GammaAdjust(3.0).validate().is_err());
        assert!(PhotometricTransform::GaussianNoise { sigma: 0.2, seed: 0 }
            .validate()
            .is_err());
        assert!(PhotometricTransform::GaussianNoise { sigma: 0.02, seed: 0 }
            .validate()
            .is_ok());
    }

    #[test]
    fn photometric_does_not_alter_geometry() {
        let scene = generate_scene(42, 1024);
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let h = crate::synthetic::random_homography(&mut rng, &g, 6.0);
        let (a, b) = render_pair(&scene, &h, &g, &RenderOptions::default()).unwrap();
        let base = estimate_motion(&a, &b, &RansacConfig::default()).unwrap();
        let ta = apply_photometric_sequence(
            std::slice::from_ref(&a),
            &PhotometricTransform::Gain(1.2),
        )
        .unwrap();
        let tb = apply_photometric_sequence(
            std::slice::from_ref(&b),
            &PhotometricTransform::GaussianNoise { sigma: 0.02, seed: 9 },
        )
        .unwrap();
        let disturbed = estimate_motion(&ta[0], &tb[0], &RansacConfig::default()).unwrap();
        assert!(disturbed.max_corner_error(&base) <= 1.0);
    }

    #[test]
    fn sampling_is_seeded_and_respects_flag() {
        let (g1, p1) = sample_augmentation(123, true);
        let (g2, p2) = sample_augmentation(123, true);
        assert_eq!(g1, g2);
        assert_eq!(p1, p2);
        let (_, p) = sample_augmentation(5, false);
        assert_eq!(p, PhotometricTransform::Identity);
    }

    #[test]
    fn sampled_kind_frequencies_are_uniform() {
        let mut counts = [0usize; 6];
        let n = 100_000usize;
        for seed in 0..n {
            let (g, _) = sample_augmentation(seed as u64, false);
            counts[GeometricTransform::ALL.iter().position(|t| *t == g).unwrap()] += 1;
        }
        let expect = n as f64 / 6.0;
        let sigma = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (i, c) in counts.iter().enumerate() {
            let dev = (*c as f64 - expect).abs();
            assert!(dev <= 3.0 * sigma + 1.0, "kind {i} count {c} deviates {dev}");
        }
    }
}
