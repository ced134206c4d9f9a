//! End-to-end orchestration: configuration, per-frame detection with stage
//! timings, and the JSON documents written by the CLI.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{IndexParams, KeygraphIndex, Match};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureParams};
use crate::geometry::{frame_keygraphs, Keygraph, KeygraphThresholds, Point};
use crate::imaging::{draw_line, to_chroma, to_grayscale, Image};
use crate::keypoints::{detect_keypoints, DetectorParams};
use crate::pose::{best_pose, Detection, Pose, PoseAccumulator, PoseQuantization};
use crate::synth::{model_quad, SceneParams};

/// Every tunable of the pipeline, as one flat JSON object. Missing keys
/// take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_radius: usize,
    pub quality_level: f64,
    pub min_distance: f64,
    pub max_keypoints: Option<usize>,

    pub min_angle: f64,
    pub min_angle_gap: f64,
    pub min_vertex_distance: f64,

    pub fraction: f64,
    pub rays_per_vertex: usize,

    pub tau: f64,
    pub neighbor_radius: u8,

    pub translation_bin: f64,
    pub scale_factor: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub rotation_bin: f64,
    pub min_votes: usize,

    pub annotate: bool,

    pub synth_frame_width: usize,
    pub synth_frame_height: usize,
    pub synth_scale_min: f64,
    pub synth_scale_max: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let d = DetectorParams::default();
        let t = KeygraphThresholds::default();
        let f = FeatureParams::default();
        let q = PoseQuantization::default();
        let s = SceneParams::default();
        Self {
            window_radius: d.window_radius,
            quality_level: d.quality_level,
            min_distance: d.min_distance,
            max_keypoints: d.max_keypoints,
            min_angle: t.min_angle,
            min_angle_gap: t.min_angle_gap,
            min_vertex_distance: t.min_vertex_distance,
            fraction: f.fraction,
            rays_per_vertex: f.rays_per_vertex,
            tau: 0.6,
            neighbor_radius: 1,
            translation_bin: q.translation_bin,
            scale_factor: q.scale_factor,
            scale_min: q.scale_min,
            scale_max: q.scale_max,
            rotation_bin: q.rotation_bin,
            min_votes: 8,
            annotate: false,
            synth_frame_width: s.frame_width,
            synth_frame_height: s.frame_height,
            synth_scale_min: s.scale_min,
            synth_scale_max: s.scale_max,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.detector().validate()?;
        self.features().validate()?;
        self.quantization().validate()?;
        let t = self.thresholds();
        if !(t.min_angle >= 0.0 && t.min_angle_gap >= 0.0 && t.min_vertex_distance >= 0.0) {
            return Err(Error::Config("keygraph thresholds must be non-negative".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.neighbor_radius > 1 {
            return Err(Error::Config(format!("neighbor_radius must be 0 or 1, got {}", self.neighbor_radius)));
        }
        if !(self.synth_scale_min > 0.0 && self.synth_scale_min <= self.synth_scale_max) {
            return Err(Error::Config("synth scale range is empty".into()));
        }
        Ok(())
    }

    pub fn detector(&self) -> DetectorParams {
        DetectorParams {
            window_radius: self.window_radius,
            quality_level: self.quality_level,
            min_distance: self.min_distance,
            max_keypoints: self.max_keypoints,
        }
    }

    pub fn thresholds(&self) -> KeygraphThresholds {
        KeygraphThresholds {
            min_angle: self.min_angle,
            min_angle_gap: self.min_angle_gap,
            min_vertex_distance: self.min_vertex_distance,
        }
    }

    pub fn features(&self) -> FeatureParams {
        FeatureParams { fraction: self.fraction, rays_per_vertex: self.rays_per_vertex }
    }

    pub fn index_params(&self) -> IndexParams {
        IndexParams { detector: self.detector(), thresholds: self.thresholds(), features: self.features() }
    }

    pub fn quantization(&self) -> PoseQuantization {
        PoseQuantization {
            translation_bin: self.translation_bin,
            scale_factor: self.scale_factor,
            scale_min: self.scale_min,
            scale_max: self.scale_max,
            rotation_bin: self.rotation_bin,
        }
    }

    pub fn scene(&self) -> SceneParams {
        SceneParams {
            frame_width: self.synth_frame_width,
            frame_height: self.synth_frame_height,
            scale_min: self.synth_scale_min,
            scale_max: self.synth_scale_max,
            ..SceneParams::default()
        }
    }
}

/// Wall time per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub keypoints: f64,
    pub keygraphs: f64,
    pub features: f64,
    pub classify: f64,
    pub vote: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameStats {
    pub keypoints: usize,
    /// Delaunay triangles examined by the keygraph filter.
    pub triangles_examined: usize,
    pub keygraphs: usize,
    /// Feature comparisons made by the classifier.
    pub comparisons: usize,
    pub matches: usize,
}

#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub detection: Option<Detection>,
    /// Votes in the most-voted cell, detection or not.
    pub peak_votes: usize,
    pub stats: FrameStats,
    pub timings: StageTimings,
}

/// Query-side settings; everything else comes from the index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryParams {
    pub tau: f64,
    pub neighbor_radius: u8,
    pub quantization: PoseQuantization,
    pub min_votes: usize,
}

impl From<&PipelineConfig> for QueryParams {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            tau: c.tau,
            neighbor_radius: c.neighbor_radius,
            quantization: c.quantization(),
            min_votes: c.min_votes,
        }
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs keypoints, Delaunay keygraphs, features, classification and voting
/// on one frame. Keypoint, keygraph and feature parameters are the ones
/// recorded in the index.
pub fn detect_frame(index: &KeygraphIndex, frame: &Image, query: &QueryParams) -> Result<FrameOutcome> {
    let start = Instant::now();
    let params = index.params();
    let mut timings = StageTimings::default();
    let mut stats = FrameStats::default();

    let t = Instant::now();
    let keypoints = detect_keypoints(&to_grayscale(frame), &params.detector)?;
    timings.keypoints = elapsed_ms(t);
    stats.keypoints = keypoints.len();

    let t = Instant::now();
    let keygraphs: Vec<Keygraph> = match frame_keygraphs(&keypoints, &params.thresholds) {
        Ok(set) => {
            stats.triangles_examined = set.examined;
            set.keygraphs
        }
        // too few or collinear keypoints: nothing to classify
        Err(Error::TooFewKeypoints { .. }) | Err(Error::AllCollinear) => Vec::new(),
        Err(e) => return Err(e),
    };
    timings.keygraphs = elapsed_ms(t);
    stats.keygraphs = keygraphs.len();

    let t = Instant::now();
    let chroma = to_chroma(frame);
    let described: Vec<_> = keygraphs
        .iter()
        .filter_map(|kg| extract_features(&chroma, kg, &params.features).ok().map(|fv| (kg, fv)))
        .collect();
    timings.features = elapsed_ms(t);

    let t = Instant::now();
    let mut matches: Vec<Match> = Vec::new();
    for (kg, fv) in &described {
        let (m, comparisons) = index.classify_counted(kg, fv, query.tau, query.neighbor_radius)?;
        stats.comparisons += comparisons;
        matches.extend(m);
    }
    timings.classify = elapsed_ms(t);
    stats.matches = matches.len();

    let t = Instant::now();
    let (w, h) = index.model_size();
    let mut acc = PoseAccumulator::with_reference(query.quantization, Point::new(w as f64 / 2.0, h as f64 / 2.0));
    for m in matches {
        acc.vote(m);
    }
    let peak_votes = acc.peak().map_or(0, |(_, v)| v.count());
    let detection = best_pose(&acc, query.min_votes);
    timings.vote = elapsed_ms(t);

    timings.total = elapsed_ms(start);
    Ok(FrameOutcome { detection, peak_votes, stats, timings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionJson {
    pub found: bool,
    pub pose: Option<Pose>,
    pub votes: usize,
    pub inlier_count: usize,
    pub quad: Option<[[f64; 2]; 4]>,
}

impl DetectionJson {
    pub fn from_outcome(outcome: &FrameOutcome, model_size: (usize, usize)) -> Self {
        match &outcome.detection {
            Some(d) => Self {
                found: true,
                pose: Some(d.pose),
                votes: d.votes,
                inlier_count: d.inliers.len(),
                quad: Some(model_quad(&d.pose, model_size).map(|p| [p.x, p.y])),
            },
            None => Self { found: false, pose: None, votes: outcome.peak_votes, inlier_count: 0, quad: None },
        }
    }
}

/// Per-frame result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: String,
    pub detection: Option<DetectionJson>,
    pub stats: Option<FrameStats>,
    pub timings_ms: Option<StageTimings>,
    pub error: Option<String>,
}

impl FrameResult {
    pub fn from_outcome(frame: String, outcome: &FrameOutcome, model_size: (usize, usize)) -> Self {
        Self {
            frame,
            detection: Some(DetectionJson::from_outcome(outcome, model_size)),
            stats: Some(outcome.stats),
            timings_ms: Some(outcome.timings),
            error: None,
        }
    }

    pub fn failed(frame: String, error: &Error) -> Self {
        Self { frame, detection: None, stats: None, timings_ms: None, error: Some(error.to_string()) }
    }
}

/// Frame with the detected quadrilateral (green) and inlier triangles
/// (red) drawn over it.
pub fn annotate(frame: &Image, outcome: &FrameOutcome, model_size: (usize, usize)) -> Image {
    let mut out = frame.clone();
    if let Some(d) = &outcome.detection {
        for m in &d.inliers {
            let v = m.frame_keygraph.vertices;
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                draw_line(&mut out, v[a], v[b], [255, 40, 40]);
            }
        }
        let quad = model_quad(&d.pose, model_size);
        for i in 0..4 {
            draw_line(&mut out, quad[i], quad[(i + 1) % 4], [40, 255, 40]);
        }
    }
    out
}
