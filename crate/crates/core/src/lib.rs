//! Keygraph object detection.
//!
//! A single model image is indexed by its thick scalene keypoint triangles
//! ("keygraphs"), bucketed by a structural key (orientation plus the two
//! largest quantized angles) and described by corner-chrominance features.
//! Frames are searched by classifying the triangles of their keypoint
//! Delaunay triangulation and voting for a similarity pose.
//!
//! Pipeline stages, in order:
//!
//! 1. [`imaging`]: PPM I/O, grayscale and chrominance conversion, segment walks.
//! 2. [`keypoints`]: minimum-eigenvalue corner detection.
//! 3. [`geometry`]: keygraph filtering, exhaustive and Delaunay enumeration.
//! 4. [`partition`]: the 2592-way structural key.
//! 5. [`features`]: corner-chrominance feature vectors.
//! 6. [`classifier`]: bucketed nearest-neighbour index.
//! 7. [`pose`]: pose induction and voting.
//!
//! [`pipeline`] wires the stages together and [`synth`] renders test scenes.

pub mod classifier;
pub mod error;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod keypoints;
pub mod partition;
pub mod pipeline;
pub mod pose;
pub mod synth;

pub use error::{Error, Result};
