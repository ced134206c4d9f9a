//! Triangle keygraphs: construction, the thick-scalene filter, and the two
//! enumerators (exhaustive for training, Delaunay for frames).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::Keypoint;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn distance_sq(self, o: Point) -> f64 {
        let d = self.sub(o);
        d.dot(d)
    }

    #[inline]
    pub fn distance(self, o: Point) -> f64 {
        self.distance_sq(o).sqrt()
    }

    /// `self + t (o - self)`.
    #[inline]
    pub fn lerp(self, o: Point, t: f64) -> Point {
        self.add(o.sub(self).scale(t))
    }
}

/// Traversal direction of a vertex sequence, in the usual Cartesian sense
/// (positive cross product is counter-clockwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Cw,
    Ccw,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Cw => Orientation::Ccw,
            Orientation::Ccw => Orientation::Cw,
        }
    }
}

/// Twice the signed area of `(a, b, c)`.
#[inline]
pub fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

const MIN_AREA: f64 = 1e-9;

/// Internal angles in degrees at `p0`, `p1`, `p2`.
pub fn internal_angles(p0: Point, p1: Point, p2: Point) -> Result<[f64; 3]> {
    if (0.5 * signed_area2(p0, p1, p2)).abs() < MIN_AREA {
        return Err(Error::DegenerateTriangle);
    }
    Ok(angles_unchecked([p0, p1, p2]))
}

fn angles_unchecked(p: [Point; 3]) -> [f64; 3] {
    let angle_at = |v: Point, a: Point, b: Point| {
        let (u, w) = (a.sub(v), b.sub(v));
        u.cross(w).abs().atan2(u.dot(w)).to_degrees()
    };
    [angle_at(p[0], p[1], p[2]), angle_at(p[1], p[2], p[0]), angle_at(p[2], p[0], p[1])]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeygraphThresholds {
    /// Smallest admissible internal angle, degrees.
    pub min_angle: f64,
    /// Smallest admissible difference between two internal angles, degrees.
    pub min_angle_gap: f64,
    /// Smallest admissible distance between two vertices, pixels.
    pub min_vertex_distance: f64,
}

impl Default for KeygraphThresholds {
    fn default() -> Self {
        Self { min_angle: 5.0, min_angle_gap: 5.0, min_vertex_distance: 10.0 }
    }
}

/// A thick scalene triangle in canonical form: vertices sorted by
/// increasing internal angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keygraph {
    pub vertex_ids: [usize; 3],
    pub vertices: [Point; 3],
    pub angles: [f64; 3],
    pub orientation: Orientation,
}

impl Keygraph {
    /// Vertex ids sorted ascending, independent of canonical order.
    pub fn id_set(&self) -> [usize; 3] {
        let mut ids = self.vertex_ids;
        ids.sort_unstable();
        ids
    }
}

/// Applies the thick-scalene filter and canonicalizes. `None` is a
/// rejection.
pub fn make_keygraph(ids: [usize; 3], points: [Point; 3], th: &KeygraphThresholds) -> Option<Keygraph> {
    let min_d2 = th.min_vertex_distance * th.min_vertex_distance;
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        if points[a].distance_sq(points[b]) < min_d2 {
            return None;
        }
    }
    let angles = internal_angles(points[0], points[1], points[2]).ok()?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
    let sorted = order.map(|i| angles[i]);
    if sorted[0] < th.min_angle || sorted[1] - sorted[0] < th.min_angle_gap || sorted[2] - sorted[1] < th.min_angle_gap {
        return None;
    }
    let vertices = order.map(|i| points[i]);
    let orientation = if signed_area2(vertices[0], vertices[1], vertices[2]) > 0.0 {
        Orientation::Ccw
    } else {
        Orientation::Cw
    };
    Some(Keygraph { vertex_ids: order.map(|i| ids[i]), vertices, angles: sorted, orientation })
}

/// Candidate keygraphs plus how many triangles were examined to find them.
#[derive(Debug, Clone, Default)]
pub struct KeygraphSet {
    pub keygraphs: Vec<Keygraph>,
    pub examined: usize,
}

/// Every unordered triple `i < j < k` that passes the filter, in
/// lexicographic id order.
pub fn enumerate_training_keygraphs(keypoints: &[Keypoint], th: &KeygraphThresholds) -> Result<KeygraphSet> {
    let n = keypoints.len();
    if n < 3 {
        return Err(Error::TooFewKeypoints { found: n });
    }
    let pts: Vec<Point> = keypoints.iter().map(Keypoint::point).collect();
    let mut out = KeygraphSet::default();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.examined += 1;
                if let Some(kg) = make_keygraph([i, j, k], [pts[i], pts[j], pts[k]], th) {
                    out.keygraphs.push(kg);
                }
            }
        }
    }
    Ok(out)
}

/// Filtered triangles of the Delaunay triangulation of the keypoints.
pub fn frame_keygraphs(keypoints: &[Keypoint], th: &KeygraphThresholds) -> Result<KeygraphSet> {
    if keypoints.len() < 3 {
        return Err(Error::TooFewKeypoints { found: keypoints.len() });
    }
    let pts: Vec<Point> = keypoints.iter().map(Keypoint::point).collect();
    let triangles = delaunay_triangulation(&pts)?;
    let keygraphs = triangles
        .iter()
        .filter_map(|&[a, b, c]| make_keygraph([a, b, c], [pts[a], pts[b], pts[c]], th))
        .collect();
    Ok(KeygraphSet { keygraphs, examined: triangles.len() })
}

/// Delaunay triangulation; each triple is counter-clockwise.
///
/// Builds a triangulation by sweeping the sorted points into a growing
/// convex hull, then applies Lawson edge flips until every interior edge is
/// locally Delaunay. Orientation and in-circle tests are exact. Exact
/// duplicate points are skipped. With cocircular points any valid diagonal
/// may be returned.
pub fn delaunay_triangulation(points: &[Point]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { found: points.len() });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(points[a].y.total_cmp(&points[b].y)));
    order.dedup_by(|a, b| points[*a] == points[*b]);
    if order.len() < 3 {
        return Err(Error::TooFewPoints { found: order.len() });
    }

    let orient = |a: usize, b: usize, c: usize| {
        robust::orient2d(coord(points[a]), coord(points[b]), coord(points[c]))
    };

    let first = order[0];
    let second = order[1];
    let Some(split) = (2..order.len()).find(|&i| orient(first, second, order[i]) != 0.0) else {
        return Err(Error::AllCollinear);
    };

    let mut mesh = Mesh::default();
    let apex = order[split];
    let chain = &order[..split];
    let side = orient(first, second, apex);
    let mut hull: Vec<usize>;
    if side > 0.0 {
        for w in chain.windows(2) {
            mesh.add([w[0], w[1], apex]);
        }
        hull = chain.to_vec();
        hull.push(apex);
    } else {
        for w in chain.windows(2) {
            mesh.add([w[1], w[0], apex]);
        }
        hull = chain.iter().rev().copied().collect();
        hull.push(apex);
    }

    for &p in &order[split + 1..] {
        let len = hull.len();
        let visible: Vec<bool> = (0..len).map(|i| orient(hull[i], hull[(i + 1) % len], p) < 0.0).collect();
        // p is lexicographically beyond the current hull, so at least one
        // edge faces it and the facing edges are contiguous
        let start = (0..len)
            .find(|&i| visible[i] && !visible[(i + len - 1) % len])
            .expect("new sweep point must see the hull");
        let mut count = 0;
        while visible[(start + count) % len] {
            let i = (start + count) % len;
            mesh.add([hull[(i + 1) % len], hull[i], p]);
            count += 1;
        }
        let mut next = Vec::with_capacity(len + 1);
        // keep hull[start], drop the vertices strictly inside the visible chain
        for k in 0..=len - count {
            next.push(hull[(start + count + k) % len]);
        }
        next.push(p);
        hull = next;
    }

    mesh.legalize(points);
    Ok(mesh.triangles)
}

fn coord(p: Point) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

#[derive(Default)]
struct Mesh {
    triangles: Vec<[usize; 3]>,
    /// Directed edge to the triangle that holds it.
    edges: HashMap<(usize, usize), usize>,
}

impl Mesh {
    fn add(&mut self, t: [usize; 3]) {
        let idx = self.triangles.len();
        self.triangles.push(t);
        self.link(idx);
    }

    fn link(&mut self, idx: usize) {
        let [a, b, c] = self.triangles[idx];
        for e in [(a, b), (b, c), (c, a)] {
            self.edges.insert(e, idx);
        }
    }

    fn unlink(&mut self, idx: usize) {
        let [a, b, c] = self.triangles[idx];
        for e in [(a, b), (b, c), (c, a)] {
            self.edges.remove(&e);
        }
    }

    /// Lawson flips until no edge has its opposite vertex strictly inside the
    /// neighbouring circumcircle.
    fn legalize(&mut self, points: &[Point]) {
        let mut stack: Vec<(usize, usize)> = self.edges.keys().copied().collect();
        stack.sort_unstable();
        while let Some((a, b)) = stack.pop() {
            let (Some(&t1), Some(&t2)) = (self.edges.get(&(a, b)), self.edges.get(&(b, a))) else {
                continue;
            };
            let c = third(self.triangles[t1], a, b);
            let d = third(self.triangles[t2], b, a);
            let inside = robust::incircle(coord(points[a]), coord(points[b]), coord(points[c]), coord(points[d]));
            if inside <= 0.0 {
                continue;
            }
            self.unlink(t1);
            self.unlink(t2);
            self.triangles[t1] = [a, d, c];
            self.triangles[t2] = [d, b, c];
            self.link(t1);
            self.link(t2);
            stack.extend([(a, d), (d, b), (b, c), (c, a)]);
        }
    }
}

/// Vertex of `t` that is neither `a` nor `b`.
fn third(t: [usize; 3], a: usize, b: usize) -> usize {
    *t.iter().find(|&&v| v != a && v != b).expect("triangle has a third vertex")
}
