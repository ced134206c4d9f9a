//! Similarity poses induced by keygraph matches, and Hough-style voting
//! over a quantized pose space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::Match;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Maps model coordinates to frame coordinates:
/// `f = scale * R(rotation) * m + (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub tx: f64,
    pub ty: f64,
    pub scale: f64,
    /// Degrees in `[0, 360)`.
    pub rotation: f64,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { tx: 0.0, ty: 0.0, scale: 1.0, rotation: 0.0 };

    pub fn new(tx: f64, ty: f64, scale: f64, rotation: f64) -> Self {
        Self { tx, ty, scale, rotation: normalize_degrees(rotation) }
    }

    pub fn apply(&self, m: Point) -> Point {
        let (s, c) = self.rotation.to_radians().sin_cos();
        Point::new(
            self.scale * (c * m.x - s * m.y) + self.tx,
            self.scale * (s * m.x + c * m.y) + self.ty,
        )
    }

    /// Inverse transform, frame to model.
    pub fn inverse(&self) -> Pose {
        let inv_scale = 1.0 / self.scale;
        let back = Pose::new(0.0, 0.0, inv_scale, -self.rotation).apply(Point::new(self.tx, self.ty));
        Pose::new(-back.x, -back.y, inv_scale, -self.rotation)
    }
}

pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Absolute angular difference on the circle, in `[0, 180]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Least-squares similarity taking each `model` point onto its `frame`
/// counterpart. In complex notation,
/// `s e^{i theta} = sum (f - f_mean) conj(m - m_mean) / sum |m - m_mean|^2`.
pub fn fit_similarity(pairs: &[(Point, Point)]) -> Result<Pose> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateInput("need at least two correspondences"));
    }
    let n = pairs.len() as f64;
    let (mut mm, mut fm) = (Point::default(), Point::default());
    for &(m, f) in pairs {
        mm = mm.add(m);
        fm = fm.add(f);
    }
    mm = mm.scale(1.0 / n);
    fm = fm.scale(1.0 / n);

    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for &(m, f) in pairs {
        let dm = m.sub(mm);
        let df = f.sub(fm);
        // df * conj(dm)
        re += df.x * dm.x + df.y * dm.y;
        im += df.y * dm.x - df.x * dm.y;
        norm += dm.dot(dm);
    }
    if norm < 1e-12 {
        return Err(Error::DegenerateInput("model points coincide"));
    }
    let (a, b) = (re / norm, im / norm);
    let scale = a.hypot(b);
    if !(scale > 1e-12) || !scale.is_finite() {
        return Err(Error::DegenerateInput("frame points coincide"));
    }
    let rotation = b.atan2(a).to_degrees();
    // t = f_mean - s R m_mean
    let t = fm.sub(Point::new(a * mm.x - b * mm.y, b * mm.x + a * mm.y));
    Ok(Pose::new(t.x, t.y, scale, rotation))
}

/// Pose taking a model triangle onto a frame triangle whose vertices are
/// listed in corresponding order.
pub fn induce_pose(model: [Point; 3], frame: [Point; 3]) -> Result<Pose> {
    let area2 = |p: [Point; 3]| p[1].sub(p[0]).cross(p[2].sub(p[0])).abs();
    if area2(model) < 1e-9 || area2(frame) < 1e-9 {
        return Err(Error::DegenerateInput("triangle has no area"));
    }
    fit_similarity(&[(model[0], frame[0]), (model[1], frame[1]), (model[2], frame[2])])
}

/// Bin sizes of the pose space, plus the inlier tolerances derived from
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseQuantization {
    /// Translation bin width, pixels.
    pub translation_bin: f64,
    /// Ratio between consecutive scale bins.
    pub scale_factor: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Rotation bin width, degrees.
    pub rotation_bin: f64,
}

impl Default for PoseQuantization {
    fn default() -> Self {
        Self { translation_bin: 16.0, scale_factor: 1.25, scale_min: 0.25, scale_max: 4.0, rotation_bin: 15.0 }
    }
}

impl PoseQuantization {
    pub fn validate(&self) -> Result<()> {
        let ok = self.translation_bin > 0.0
            && self.scale_factor > 1.0
            && self.scale_min > 0.0
            && self.scale_max > self.scale_min
            && self.rotation_bin > 0.0
            && self.rotation_bin <= 360.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid pose quantization {self:?}")))
        }
    }

    fn rotation_bins(&self) -> i64 {
        (360.0 / self.rotation_bin).ceil() as i64
    }
}

/// A quantized pose cell. Ordering is lexicographic over the fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoseCell {
    pub tx: i64,
    pub ty: i64,
    pub scale: i64,
    pub rotation: i64,
}

#[derive(Debug, Clone, Default)]
pub struct CellVotes {
    pub matches: Vec<Match>,
}

impl CellVotes {
    pub fn count(&self) -> usize {
        self.matches.len()
    }
}

/// Quantized vote table.
///
/// The translation coordinate of a vote is where the pose sends
/// `reference`, a fixed model point. With the model origin as reference
/// this is `(tx, ty)` itself.
#[derive(Debug, Clone)]
pub struct PoseAccumulator {
    quantization: PoseQuantization,
    reference: Point,
    cells: BTreeMap<PoseCell, CellVotes>,
    /// Votes whose scale fell outside `[scale_min, scale_max]`.
    rejected: usize,
}

impl PoseAccumulator {
    pub fn new(quantization: PoseQuantization) -> Self {
        Self::with_reference(quantization, Point::default())
    }

    pub fn with_reference(quantization: PoseQuantization, reference: Point) -> Self {
        Self { quantization, reference, cells: BTreeMap::new(), rejected: 0 }
    }

    pub fn quantization(&self) -> &PoseQuantization {
        &self.quantization
    }

    pub fn reference(&self) -> Point {
        self.reference
    }

    /// Cell containing `pose`, or `None` when its scale is out of range.
    pub fn cell_of(&self, pose: &Pose) -> Option<PoseCell> {
        let q = &self.quantization;
        if !(pose.scale >= q.scale_min && pose.scale < q.scale_max) {
            return None;
        }
        let anchor = pose.apply(self.reference);
        Some(PoseCell {
            tx: (anchor.x / q.translation_bin).floor() as i64,
            ty: (anchor.y / q.translation_bin).floor() as i64,
            scale: ((pose.scale / q.scale_min).ln() / q.scale_factor.ln()).floor() as i64,
            rotation: ((normalize_degrees(pose.rotation) / q.rotation_bin).floor() as i64).rem_euclid(q.rotation_bins()),
        })
    }

    pub fn vote(&mut self, m: Match) {
        match self.cell_of(&m.induced_pose) {
            Some(cell) => self.cells.entry(cell).or_default().matches.push(m),
            None => self.rejected += 1,
        }
    }

    /// Folds another accumulator's votes into this one. Cell counts equal
    /// those of voting both match streams sequentially.
    pub fn merge(&mut self, other: PoseAccumulator) {
        for (cell, votes) in other.cells {
            self.cells.entry(cell).or_default().matches.extend(votes.matches);
        }
        self.rejected += other.rejected;
    }

    pub fn cells(&self) -> &BTreeMap<PoseCell, CellVotes> {
        &self.cells
    }

    pub fn total_votes(&self) -> usize {
        self.cells.values().map(CellVotes::count).sum()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Most-voted cell; ties go to the smallest cell.
    pub fn peak(&self) -> Option<(PoseCell, &CellVotes)> {
        let mut best: Option<(PoseCell, &CellVotes)> = None;
        for (cell, votes) in &self.cells {
            if best.is_none_or(|(_, b)| votes.count() > b.count()) {
                best = Some((*cell, votes));
            }
        }
        best
    }

    /// Representative pose at the center of a cell.
    pub fn cell_center(&self, cell: &PoseCell) -> Pose {
        let q = &self.quantization;
        let scale = q.scale_min * q.scale_factor.powf(cell.scale as f64 + 0.5);
        let rotation = (cell.rotation as f64 + 0.5) * q.rotation_bin;
        let anchor = Point::new((cell.tx as f64 + 0.5) * q.translation_bin, (cell.ty as f64 + 0.5) * q.translation_bin);
        let moved = Pose::new(0.0, 0.0, scale, rotation).apply(self.reference);
        Pose::new(anchor.x - moved.x, anchor.y - moved.y, scale, rotation)
    }

    /// Whether `candidate` lies within one bin of `pose` in every parameter.
    pub fn agrees(&self, pose: &Pose, candidate: &Pose) -> bool {
        let q = &self.quantization;
        let a = pose.apply(self.reference);
        let b = candidate.apply(self.reference);
        let ratio = pose.scale.max(candidate.scale) / pose.scale.min(candidate.scale);
        (a.x - b.x).abs() <= q.translation_bin
            && (a.y - b.y).abs() <= q.translation_bin
            && ratio <= q.scale_factor
            && circular_distance(pose.rotation, candidate.rotation) <= q.rotation_bin
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub pose: Pose,
    /// Votes in the winning cell.
    pub votes: usize,
    pub inliers: Vec<Match>,
}

/// Picks the most-voted cell, refits the pose over every vertex
/// correspondence in it, and gathers all matches that agree with the
/// refined pose.
pub fn best_pose(acc: &PoseAccumulator, min_votes: usize) -> Option<Detection> {
    let (cell, votes) = acc.peak()?;
    if votes.count() < min_votes || votes.count() == 0 {
        return None;
    }
    let pairs: Vec<(Point, Point)> = votes
        .matches
        .iter()
        .flat_map(|m| m.model_vertices.into_iter().zip(m.frame_keygraph.vertices))
        .collect();
    let pose = fit_similarity(&pairs).unwrap_or_else(|_| acc.cell_center(&cell));
    let inliers = acc
        .cells
        .values()
        .flat_map(|v| v.matches.iter())
        .filter(|m| acc.agrees(&pose, &m.induced_pose))
        .cloned()
        .collect();
    Some(Detection { pose, votes: votes.count(), inliers })
}
