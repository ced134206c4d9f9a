//! Minimum-eigenvalue ("good features to track") corner detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imaging::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Smaller eigenvalue of the windowed structure tensor.
    pub score: f64,
}

impl Keypoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Half-size of the square window the structure tensor is summed over.
    pub window_radius: usize,
    /// Fraction of the strongest response a corner must reach.
    pub quality_level: f64,
    pub min_distance: f64,
    /// `None` keeps every corner.
    pub max_keypoints: Option<usize>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self { window_radius: 2, quality_level: 0.05, min_distance: 10.0, max_keypoints: Some(400) }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.quality_level > 0.0 && self.quality_level < 1.0) {
            return Err(Error::Config(format!("quality_level must lie in (0, 1), got {}", self.quality_level)));
        }
        if !(self.min_distance >= 0.0) {
            return Err(Error::Config(format!("min_distance must be >= 0, got {}", self.min_distance)));
        }
        Ok(())
    }
}

/// Detects corners, strongest first.
///
/// Gradients use the 3x3 Sobel operator. The tensor is summed over a
/// `(2r + 1)^2` box, candidates must be 3x3 local maxima above
/// `quality_level * max_score`, and a greedy pass enforces `min_distance`.
/// Keypoints sit at pixel centers.
pub fn detect_keypoints(gray: &GrayImage, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    params.validate()?;
    let (w, h) = (gray.width(), gray.height());
    let r = params.window_radius;
    let min = 2 * r + 3;
    if w < min || h < min {
        return Err(Error::ImageTooSmall { width: w, height: h, min });
    }

    let scores = min_eigenvalue_map(gray, r);
    let border = r + 1;

    let max_score = scores.iter().copied().fold(0.0f64, f64::max);
    if max_score <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = params.quality_level * max_score;

    let mut candidates = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let s = scores[y * w + x];
            if s < threshold || s <= 0.0 {
                continue;
            }
            let is_max = (y - 1..=y + 1)
                .all(|ny| (x - 1..=x + 1).all(|nx| scores[ny * w + nx] <= s));
            if is_max {
                candidates.push((s, x, y));
            }
        }
    }
    // descending score, ties in raster order
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let limit = params.max_keypoints.unwrap_or(usize::MAX);
    let mut grid = SpacingGrid::new(w, h, params.min_distance);
    let mut out = Vec::new();
    for (score, x, y) in candidates {
        if out.len() >= limit {
            break;
        }
        let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
        if grid.accepts(p) {
            grid.insert(p);
            out.push(Keypoint { x: p.x, y: p.y, score });
        }
    }
    Ok(out)
}

/// Minimum eigenvalue of the box-summed structure tensor at every pixel;
/// zero where the window or gradient stencil would leave the image.
fn min_eigenvalue_map(gray: &GrayImage, r: usize) -> Vec<f64> {
    let (w, h) = (gray.width(), gray.height());
    let v = gray.values();

    // integral images of Ixx, Iyy, Ixy with a zero first row/column
    let stride = w + 1;
    let mut sxx = vec![0.0; stride * (h + 1)];
    let mut syy = vec![0.0; stride * (h + 1)];
    let mut sxy = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let (mut rxx, mut ryy, mut rxy) = (0.0, 0.0, 0.0);
        for x in 0..w {
            let (gx, gy) = if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                (0.0, 0.0)
            } else {
                let at = |dx: isize, dy: isize| v[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                let gx = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1) - at(-1, -1) - 2.0 * at(-1, 0) - at(-1, 1)) / 8.0;
                let gy = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1) - at(-1, -1) - 2.0 * at(0, -1) - at(1, -1)) / 8.0;
                (gx, gy)
            };
            rxx += gx * gx;
            ryy += gy * gy;
            rxy += gx * gy;
            let i = (y + 1) * stride + x + 1;
            sxx[i] = sxx[i - stride] + rxx;
            syy[i] = syy[i - stride] + ryy;
            sxy[i] = sxy[i - stride] + rxy;
        }
    }
    let box_sum = |s: &[f64], x0: usize, y0: usize, x1: usize, y1: usize| {
        s[y1 * stride + x1] - s[y0 * stride + x1] - s[y1 * stride + x0] + s[y0 * stride + x0]
    };

    let border = r + 1;
    let mut scores = vec![0.0; w * h];
    for y in border..h - border {
        for x in border..w - border {
            let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
            let a = box_sum(&sxx, x0, y0, x1, y1);
            let c = box_sum(&syy, x0, y0, x1, y1);
            let b = box_sum(&sxy, x0, y0, x1, y1);
            let half_trace = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            // clamp tiny negatives from cancellation
            scores[y * w + x] = (half_trace - disc).max(0.0);
        }
    }
    scores
}

/// Uniform grid for rejecting points closer than a minimum spacing.
struct SpacingGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    min_distance: f64,
    cells: Vec<Vec<Point>>,
}

impl SpacingGrid {
    fn new(w: usize, h: usize, min_distance: f64) -> Self {
        let cell = min_distance.max(1.0);
        let cols = (w as f64 / cell).ceil() as usize + 1;
        let rows = (h as f64 / cell).ceil() as usize + 1;
        Self { cell, cols, rows, min_distance, cells: vec![Vec::new(); cols * rows] }
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        (
            ((p.x / self.cell) as usize).min(self.cols - 1),
            ((p.y / self.cell) as usize).min(self.rows - 1),
        )
    }

    fn accepts(&self, p: Point) -> bool {
        if self.min_distance <= 0.0 {
            return true;
        }
        let (cx, cy) = self.cell_of(p);
        let min_sq = self.min_distance * self.min_distance;
        for gy in cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1) {
                if self.cells[gy * self.cols + gx].iter().any(|q| q.distance_sq(p) < min_sq) {
                    return false;
                }
            }
        }
        true
    }

    fn insert(&mut self, p: Point) {
        let (cx, cy) = self.cell_of(p);
        self.cells[cy * self.cols + cx].push(p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{to_grayscale, Image};

    fn square_image() -> GrayImage {
        to_grayscale(&Image::from_fn(256, 256, |x, y| {
            if (96..160).contains(&x) && (96..160).contains(&y) {
                [255, 255, 255]
            } else {
                [0, 0, 0]
            }
        }))
    }

    fn params(quality_level: f64) -> DetectorParams {
        DetectorParams { window_radius: 2, quality_level, min_distance: 10.0, max_keypoints: None }
    }

    #[test]
    fn constant_image_has_no_corners() {
        let g = to_grayscale(&Image::filled(32, 32, [40, 90, 200]));
        assert!(detect_keypoints(&g, &DetectorParams::default()).unwrap().is_empty());
    }

    #[test]
    fn square_has_four_corners() {
        let kps = detect_keypoints(&square_image(), &params(0.1)).unwrap();
        assert_eq!(kps.len(), 4, "{kps:?}");
        for corner in [(96.0, 96.0), (160.0, 96.0), (96.0, 160.0), (160.0, 160.0)] {
            assert!(
                kps.iter().any(|k| (k.x - corner.0).abs() <= 2.0 && (k.y - corner.1).abs() <= 2.0),
                "no keypoint near {corner:?}: {kps:?}"
            );
        }
        assert!(kps.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn checkerboard_lattice() {
        let g = to_grayscale(&Image::from_fn(256, 256, |x, y| {
            if (x / 32 + y / 32) % 2 == 0 {
                [255, 255, 255]
            } else {
                [0, 0, 0]
            }
        }));
        let kps = detect_keypoints(&g, &params(0.1)).unwrap();
        assert_eq!(kps.len(), 49);
        for i in 1..8 {
            for j in 1..8 {
                let (cx, cy) = (32.0 * i as f64, 32.0 * j as f64);
                assert!(kps.iter().any(|k| (k.x - cx).abs() <= 2.0 && (k.y - cy).abs() <= 2.0));
            }
        }
    }

    #[test]
    fn too_small_image() {
        let g = to_grayscale(&Image::filled(6, 6, [0, 0, 0]));
        assert!(matches!(
            detect_keypoints(&g, &DetectorParams::default()),
            Err(Error::ImageTooSmall { min: 7, .. })
        ));
        let g = to_grayscale(&Image::filled(7, 7, [0, 0, 0]));
        assert!(detect_keypoints(&g, &DetectorParams::default()).is_ok());
    }

    #[test]
    fn invalid_params() {
        let g = square_image();
        assert!(detect_keypoints(&g, &params(0.0)).is_err());
        assert!(detect_keypoints(&g, &params(1.0)).is_err());
    }

    #[test]
    fn max_keypoints_truncates_strongest_first() {
        let g = square_image();
        let all = detect_keypoints(&g, &params(0.1)).unwrap();
        let two = detect_keypoints(&g, &DetectorParams { max_keypoints: Some(2), ..params(0.1) }).unwrap();
        assert_eq!(two.as_slice(), &all[..2]);
    }
}
