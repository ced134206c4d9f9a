//! Synthetic test scenes: textured models, unrelated textures, smooth
//! backgrounds, and composites of a model under a known similarity pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::imaging::Image;
use crate::pose::Pose;

/// Anti-aliasing grid per pixel when rendering shapes.
const SUPERSAMPLE: usize = 4;

fn saturated_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let hue = rng.gen_range(0.0..360.0);
    let sat = rng.gen_range(0.55..1.0);
    let val = rng.gen_range(0.45..1.0);
    hsv_to_rgb(hue, sat, val)
}

pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [u8; 3] {
    let c = val * sat;
    let hp = hue.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

enum Shape {
    Polygon(Vec<Point>),
    Disc(Point, f64),
}

impl Shape {
    fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Polygon(v) => {
                // convex, counter-clockwise
                (0..v.len()).all(|i| v[(i + 1) % v.len()].sub(v[i]).cross(p.sub(v[i])) >= 0.0)
            }
            Shape::Disc(c, r) => c.distance_sq(p) <= r * r,
        }
    }

    fn bounds(&self) -> (Point, Point) {
        match self {
            Shape::Polygon(v) => {
                let lo = v.iter().fold(Point::new(f64::MAX, f64::MAX), |a, p| Point::new(a.x.min(p.x), a.y.min(p.y)));
                let hi = v.iter().fold(Point::new(f64::MIN, f64::MIN), |a, p| Point::new(a.x.max(p.x), a.y.max(p.y)));
                (lo, hi)
            }
            Shape::Disc(c, r) => (Point::new(c.x - r, c.y - r), Point::new(c.x + r, c.y + r)),
        }
    }
}

/// Paints a shape with per-pixel coverage blending.
fn paint(img: &mut Image, shape: &Shape, rgb: [u8; 3]) {
    let (lo, hi) = shape.bounds();
    let x0 = lo.x.floor().max(0.0) as usize;
    let y0 = lo.y.floor().max(0.0) as usize;
    let x1 = (hi.x.ceil().max(0.0) as usize).min(img.width());
    let y1 = (hi.y.ceil().max(0.0) as usize).min(img.height());
    let n = SUPERSAMPLE;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0;
            for sy in 0..n {
                for sx in 0..n {
                    let p = Point::new(x as f64 + (sx as f64 + 0.5) / n as f64, y as f64 + (sy as f64 + 0.5) / n as f64);
                    if shape.contains(p) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let a = hits as f64 / (n * n) as f64;
            let old = img.get(x, y);
            let mixed = std::array::from_fn(|c| (a * rgb[c] as f64 + (1.0 - a) * old[c] as f64).round() as u8);
            img.set(x, y, mixed);
        }
    }
}

/// Random convex polygon with `sides` vertices around `center`.
fn random_polygon(rng: &mut ChaCha8Rng, center: Point, radius: f64, sides: usize) -> Shape {
    // jittered even spacing keeps vertices apart
    let base = rng.gen_range(0.0..std::f64::consts::TAU);
    let step = std::f64::consts::TAU / sides as f64;
    let pts = (0..sides)
        .map(|i| {
            let a = base + i as f64 * step + rng.gen_range(-0.3..0.3) * step;
            let r = radius * rng.gen_range(0.6..1.0);
            Point::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    Shape::Polygon(pts)
}

/// A model image made of many overlapping, randomly coloured triangles and
/// quadrilaterals on a coloured backdrop.
pub fn textured_model(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::filled(width, height, saturated_color(&mut rng));
    let count = (width * height / 1000).clamp(4, 400);
    let scale = (width.min(height) as f64) * 0.12;
    for _ in 0..count {
        let center = Point::new(rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
        // triangles and quads only: sharp vertices with a wide spread of
        // brightness give corners that stand out over resampling artifacts
        let sides = rng.gen_range(3..=4);
        let radius = rng.gen_range(0.4..1.0) * scale;
        let shape = random_polygon(&mut rng, center, radius, sides);
        let color = hsv_to_rgb(rng.gen_range(0.0..360.0), rng.gen_range(0.55..1.0), rng.gen_range(0.15..1.0));
        paint(&mut img, &shape, color);
    }
    img
}

/// Texture unrelated to any [`textured_model`]: discs and thin bars.
pub fn unrelated_texture(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_d15c);
    let mut img = Image::filled(width, height, saturated_color(&mut rng));
    let count = (width * height / 2500).clamp(4, 200);
    for i in 0..count {
        let center = Point::new(rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
        let shape = if i % 3 == 0 {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (len, thick) = (rng.gen_range(30.0..120.0), rng.gen_range(3.0..9.0));
            let d = Point::new(a.cos(), a.sin());
            let n = Point::new(-d.y, d.x);
            let corners = [
                center.add(d.scale(-len)).add(n.scale(-thick)),
                center.add(d.scale(len)).add(n.scale(-thick)),
                center.add(d.scale(len)).add(n.scale(thick)),
                center.add(d.scale(-len)).add(n.scale(thick)),
            ];
            Shape::Polygon(corners.to_vec())
        } else {
            Shape::Disc(center, rng.gen_range(8.0..40.0))
        };
        let color = saturated_color(&mut rng);
        paint(&mut img, &shape, color);
    }
    img
}

/// Smooth, weakly saturated gradient without corners.
pub fn smooth_background(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb4c6_0000);
    let h0 = rng.gen_range(0.0..360.0);
    let h1 = h0 + rng.gen_range(30.0..120.0);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    Image::from_fn(width, height, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let hue = h0 + (h1 - h0) * u;
        let val = 0.55 + 0.1 * (std::f64::consts::TAU * v + phase).sin();
        hsv_to_rgb(hue, 0.25, val)
    })
}

/// Renders `model` into `background` under `pose` (model to frame), using
/// nearest-neighbour sampling of the model.
pub fn composite(model: &Image, background: &Image, pose: &Pose) -> Image {
    let inv = pose.inverse();
    let mut out = background.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            let m = inv.apply(Point::new(x as f64 + 0.5, y as f64 + 0.5));
            if m.x >= 0.0 && m.y >= 0.0 && m.x < model.width() as f64 && m.y < model.height() as f64 {
                out.set(x, y, model.get(m.x as usize, m.y as usize));
            }
        }
    }
    out
}

/// Model corners in frame coordinates, clockwise from the origin.
pub fn model_quad(pose: &Pose, model_size: (usize, usize)) -> [Point; 4] {
    let (w, h) = (model_size.0 as f64, model_size.1 as f64);
    [Point::new(0.0, 0.0), Point::new(w, 0.0), Point::new(w, h), Point::new(0.0, h)].map(|p| pose.apply(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub frame_width: usize,
    pub frame_height: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Minimum distance kept between the placed model and the frame border.
    pub margin: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self { frame_width: 640, frame_height: 480, scale_min: 0.7, scale_max: 1.4, margin: 8.0 }
    }
}

/// Draws a pose whose placed model lies fully inside the frame, or `None`
/// if the model cannot fit at the drawn scale.
pub fn random_pose(rng: &mut impl Rng, model_size: (usize, usize), params: &SceneParams) -> Option<Pose> {
    for _ in 0..64 {
        let scale = rng.gen_range(params.scale_min..=params.scale_max);
        let rotation = rng.gen_range(0.0..360.0);
        let quad = model_quad(&Pose::new(0.0, 0.0, scale, rotation), model_size);
        let min_x = quad.iter().map(|p| p.x).fold(f64::MAX, f64::min);
        let max_x = quad.iter().map(|p| p.x).fold(f64::MIN, f64::max);
        let min_y = quad.iter().map(|p| p.y).fold(f64::MAX, f64::min);
        let max_y = quad.iter().map(|p| p.y).fold(f64::MIN, f64::max);
        let lo_x = params.margin - min_x;
        let hi_x = params.frame_width as f64 - params.margin - max_x;
        let lo_y = params.margin - min_y;
        let hi_y = params.frame_height as f64 - params.margin - max_y;
        if lo_x <= hi_x && lo_y <= hi_y {
            let tx = rng.gen_range(lo_x..=hi_x);
            let ty = rng.gen_range(lo_y..=hi_y);
            return Some(Pose::new(tx, ty, scale, rotation));
        }
    }
    None
}

/// Ground truth stored next to each synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame: String,
    pub width: usize,
    pub height: usize,
    pub model_size: [usize; 2],
    pub pose: Pose,
    pub quad: [[f64; 2]; 4],
}

/// One synthetic scene: the `index`-th draw from a seeded stream.
pub fn synth_scene(model: &Image, params: &SceneParams, seed: u64, index: u64) -> Option<(Image, Pose)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let pose = random_pose(&mut rng, (model.width(), model.height()), params)?;
    let background = smooth_background(params.frame_width, params.frame_height, seed.wrapping_add(index));
    Some((composite(model, &background, &pose), pose))
}
