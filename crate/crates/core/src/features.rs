//! Corner-chrominance features.
//!
//! For each canonical vertex `v` with neighbours `a` (smaller canonical
//! index) and `b`, a chord joins `v + f (a - v)` and `v + f (b - v)`. `R`
//! rays run from `v` to evenly spaced interior chord points, and each ray
//! contributes the mean chrominance of the pixels it crosses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Keygraph, Point};
use crate::imaging::{mean_chrominance_along, ChromaImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    /// Position of the chord along each incident edge, in `(0, 0.5]`.
    pub fraction: f64,
    pub rays_per_vertex: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { fraction: 1.0 / 3.0, rays_per_vertex: 3 }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 0.5) {
            return Err(Error::Config(format!("fraction must lie in (0, 0.5], got {}", self.fraction)));
        }
        if self.rays_per_vertex == 0 {
            return Err(Error::Config("rays_per_vertex must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of scalars in a feature vector.
    pub fn dimension(&self) -> usize {
        3 * self.rays_per_vertex * 2
    }
}

/// Flat chrominance pairs `[cx0, cy0, cx1, cy1, ...]` in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Ray targets for one vertex, ordered from the edge toward `a` to the
/// edge toward `b`.
fn ray_targets(v: Point, a: Point, b: Point, params: &FeatureParams) -> impl Iterator<Item = Point> {
    let pa = v.lerp(a, params.fraction);
    let pb = v.lerp(b, params.fraction);
    let r = params.rays_per_vertex;
    (1..=r).map(move |t| pa.lerp(pb, t as f64 / (r + 1) as f64))
}

pub fn extract_features(chroma: &ChromaImage, kg: &Keygraph, params: &FeatureParams) -> Result<FeatureVector> {
    params.validate()?;
    let [p0, p1, p2] = kg.vertices;
    let corners = [(p0, p1, p2), (p1, p0, p2), (p2, p0, p1)];
    let mut values = Vec::with_capacity(params.dimension());
    for (v, a, b) in corners {
        for q in ray_targets(v, a, b, params) {
            let [cx, cy] = mean_chrominance_along(chroma, v, q)?;
            values.push(cx);
            values.push(cy);
        }
    }
    Ok(FeatureVector(values))
}

/// Euclidean distance over all scalars.
pub fn feature_distance(u: &FeatureVector, v: &FeatureVector) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch { expected: u.len(), found: v.len() });
    }
    Ok(squared_distance(u.as_slice(), v.as_slice()).sqrt())
}

#[inline]
pub(crate) fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_keygraph, KeygraphThresholds};
    use crate::imaging::{to_chroma, Image};

    fn triangle() -> Keygraph {
        make_keygraph(
            [0, 1, 2],
            [Point::new(20.5, 30.5), Point::new(110.5, 40.5), Point::new(50.5, 100.5)],
            &KeygraphThresholds::default(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_images() {
        let red = to_chroma(&Image::filled(128, 128, [255, 0, 0]));
        let fv = extract_features(&red, &triangle(), &FeatureParams::default()).unwrap();
        assert_eq!(fv.len(), 18);
        for pair in fv.as_slice().chunks(2) {
            assert!((pair[0] - 1.0).abs() < 1e-12 && pair[1].abs() < 1e-12);
        }
        let gray = to_chroma(&Image::filled(128, 128, [120, 120, 120]));
        let fv = extract_features(&gray, &triangle(), &FeatureParams::default()).unwrap();
        assert!(fv.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_ray_targets_chord_midpoint() {
        let params = FeatureParams { fraction: 0.5, rays_per_vertex: 1 };
        let v = Point::new(0.0, 0.0);
        let q: Vec<Point> = ray_targets(v, Point::new(10.0, 0.0), Point::new(0.0, 10.0), &params).collect();
        assert_eq!(q, vec![Point::new(2.5, 2.5)]);
    }

    #[test]
    fn border_triangle_fails() {
        let chroma = to_chroma(&Image::filled(60, 60, [0, 0, 255]));
        assert!(matches!(
            extract_features(&chroma, &triangle(), &FeatureParams::default()),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn invalid_params() {
        let chroma = to_chroma(&Image::filled(128, 128, [0, 0, 255]));
        for params in [
            FeatureParams { fraction: 0.0, rays_per_vertex: 3 },
            FeatureParams { fraction: 0.6, rays_per_vertex: 3 },
            FeatureParams { fraction: 0.3, rays_per_vertex: 0 },
        ] {
            assert!(extract_features(&chroma, &triangle(), &params).is_err());
        }
    }

    #[test]
    fn distances() {
        let u = FeatureVector([1.0, 0.0].repeat(9));
        let z = FeatureVector(vec![0.0; 18]);
        assert_eq!(feature_distance(&u, &u).unwrap(), 0.0);
        assert!((feature_distance(&u, &z).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(
            feature_distance(&u, &FeatureVector(vec![0.0; 6])),
            Err(Error::LengthMismatch { expected: 18, found: 6 })
        ));
    }

    #[test]
    fn triangle_inequality() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut draw = || FeatureVector((0..18).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let (a, b, c) = (draw(), draw(), draw());
            let ab = feature_distance(&a, &b).unwrap();
            let bc = feature_distance(&b, &c).unwrap();
            let ac = feature_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
            let direct: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!((ab - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn color_wheel_quarter_turn() {
        // hue follows the polar angle around the centroid
        let size = 200usize;
        let pts = [Point::new(70.5, 80.5), Point::new(150.5, 95.5), Point::new(95.5, 140.5)];
        let c = (pts[0].x + pts[1].x + pts[2].x) / 3.0;
        let cy = (pts[0].y + pts[1].y + pts[2].y) / 3.0;
        let wheel = |x: f64, y: f64| {
            let ang = (y - cy).atan2(x - c).to_degrees().rem_euclid(360.0);
            hsv_to_rgb(ang, 0.9, 0.8)
        };
        let img = Image::from_fn(size, size, |x, y| wheel(x as f64 + 0.5, y as f64 + 0.5));
        // rotate pixels: (x, y) -> (H - 1 - y, x)
        let rot = Image::from_fn(size, size, |x, y| img.get(y, size - 1 - x));
        let th = KeygraphThresholds::default();
        let kg = make_keygraph([0, 1, 2], pts, &th).unwrap();
        let rotated_pts = pts.map(|p| Point::new(size as f64 - p.y, p.x));
        let kg_rot = make_keygraph([0, 1, 2], rotated_pts, &th).unwrap();
        let params = FeatureParams::default();
        let a = extract_features(&to_chroma(&img), &kg, &params).unwrap();
        let b = extract_features(&to_chroma(&rot), &kg_rot, &params).unwrap();
        let linf = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(linf <= 0.1, "L-inf deviation {linf}");
    }

    fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
        let c = v * s;
        let hp = h / 60.0;
        let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
        let (r, g, b) = match hp as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = v - c;
        [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
    }
}
