//! Grayscale frame storage and image/directory I/O.
//!
//! Pixels are row-major intensities in `[0, 1]`. Files are read as 8-bit
//! grayscale or RGB (converted by luma) PNG/PGM, ordered by zero-padded
//! filename index.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::FrameGeometry;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    BadLength { width: u32, height: u32, got: usize },
    #[error("pixel value out of [0,1] or non-finite at index {0}")]
    BadPixel(usize),
    #[error("frame must be at least 2x2, got {0}x{1}")]
    TooSmall(u32, u32),
    #[error("no frames found in {0}")]
    EmptyDirectory(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// A single grayscale frame with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: u32,
    height: u32,
    pixels: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<f32>) -> Result<Self, FrameError> {
        if width < 2 || height < 2 {
            return Err(FrameError::TooSmall(width, height));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(FrameError::BadLength { width, height, got: pixels.len() });
        }
        for (i, v) in pixels.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(FrameError::BadPixel(i));
            }
        }
        Ok(Self { width, height, pixels })
    }

    /// A frame of constant intensity.
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self::new(width, height, vec![value; (width as usize) * (height as usize)]).unwrap()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    /// Bilinear sample at a float position; out-of-bounds reads as 0.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let at = |xi: i64, yi: i64| -> f32 {
            if xi < 0 || yi < 0 || xi >= i64::from(self.width) || yi >= i64::from(self.height) {
                0.0
            } else {
                self.pixels[yi as usize * self.width as usize + xi as usize]
            }
        };
        let p00 = at(x0, y0);
        let p10 = at(x0 + 1, y0);
        let p01 = at(x0, y0 + 1);
        let p11 = at(x0 + 1, y0 + 1);
        let a = p00 + fx * (p10 - p00);
        let b = p01 + fx * (p11 - p01);
        a + fy * (b - a)
    }

    /// Box-average downsample to `out_w x out_h`. Cell boundaries are the
    /// floor of the proportional split, so the result is deterministic for
    /// any size ratio.
    pub fn downsample(&self, out_w: u32, out_h: u32) -> GrayFrame {
        assert!(out_w >= 2 && out_h >= 2 && out_w <= self.width && out_h <= self.height);
        let (w, h) = (self.width as usize, self.height as usize);
        let mut out = vec![0.0f32; out_w as usize * out_h as usize];
        for oy in 0..out_h as usize {
            let y0 = oy * h / out_h as usize;
            let y1 = ((oy + 1) * h / out_h as usize).max(y0 + 1);
            for ox in 0..out_w as usize {
                let x0 = ox * w / out_w as usize;
                let x1 = ((ox + 1) * w / out_w as usize).max(x0 + 1);
                let mut acc = 0.0f64;
                for y in y0..y1 {
                    let row = &self.pixels[y * w + x0..y * w + x1];
                    acc += row.iter().map(|v| f64::from(*v)).sum::<f64>();
                }
                out[oy * out_w as usize + ox] =
                    (acc / ((y1 - y0) as f64 * (x1 - x0) as f64)) as f32;
            }
        }
        GrayFrame { width: out_w, height: out_h, pixels: out }
    }

    /// Loads a PNG/PGM file, converting RGB to luma.
    pub fn load(path: &Path) -> Result<Self, FrameError> {
        let img = image::open(path).map_err(|source| FrameError::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let luma = img.to_luma8();
        let (width, height) = luma.dimensions();
        let pixels = luma.as_raw().iter().map(|v| f32::from(*v) / 255.0).collect();
        GrayFrame::new(width, height, pixels)
    }

    /// Writes the frame as an 8-bit grayscale image; format from extension.
    pub fn save(&self, path: &Path) -> Result<(), FrameError> {
        let buf: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width, self.height, buf)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|source| FrameError::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Lists frame files (png/pgm) in a directory, ordered by filename.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>, FrameError> {
    let rd = std::fs::read_dir(dir).map_err(|source| FrameError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(FrameError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(files)
}

/// Loads every frame of a directory in filename order.
pub fn load_frame_dir(dir: &Path) -> Result<Vec<GrayFrame>, FrameError> {
    list_frame_files(dir)?.iter().map(|p| GrayFrame::load(p)).collect()
}

/// Writes frames as zero-padded `%06d.png` files under `dir`.
pub fn save_frame_dir(dir: &Path, frames: &[GrayFrame]) -> Result<(), FrameError> {
    std::fs::create_dir_all(dir).map_err(|source| FrameError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (i, f) in frames.iter().enumerate() {
        f.save(&dir.join(format!("{i:06}.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_validates() {
        assert!(GrayFrame::new(4, 4, vec![0.5; 16]).is_ok());
        assert!(matches!(
            GrayFrame::new(4, 4, vec![0.5; 15]),
            Err(FrameError::BadLength { .. })
        ));
        assert!(matches!(
            GrayFrame::new(4, 4, vec![1.5; 16]),
            Err(FrameError::BadPixel(0))
        ));
        assert!(matches!(GrayFrame::new(1, 4, vec![0.0; 4]), Err(FrameError::TooSmall(1, 4))));
    }

    #[test]
    fn bilinear_interpolates_and_zero_pads() {
        let f = GrayFrame::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((f.sample_bilinear(0.5, 0.5) - 0.5).abs() < 1e-6);
        assert_eq!(f.sample_bilinear(-5.0, 0.0), 0.0);
    }

    #[test]
    fn downsample_box_mean() {
        // 4x4 with one bright quadrant; 2x2 output averages each quadrant.
        let mut f = GrayFrame::filled(4, 4, 0.0);
        for y in 0..2 {
            for x in 0..2 {
                f.set(x, y, 1.0);
            }
        }
        let d = f.downsample(2, 2);
        assert_eq!(d.pixels(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn png_roundtrip_and_dir_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = GrayFrame::filled(8, 6, 0.25);
        let b = GrayFrame::filled(8, 6, 0.75);
        save_frame_dir(dir.path(), &[a.clone(), b.clone()]).unwrap();
        let frames = load_frame_dir(dir.path()).unwrap();
        assert_eq!(frames.len(), 2);
        // 0.25*255 = 63.75 -> 64 -> 64/255.
        assert!((frames[0].get(0, 0) - 64.0 / 255.0).abs() < 1e-6);
        assert!((frames[1].get(0, 0) - 191.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn empty_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_frame_dir(dir.path()), Err(FrameError::EmptyDirectory(_))));
    }
}
