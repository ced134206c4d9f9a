use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("point ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds { x: f64, y: f64, width: usize, height: usize },

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("degenerate triangle")]
    DegenerateTriangle,

    #[error("too few points: {found}, need at least 3")]
    TooFewPoints { found: usize },

    #[error("all points are collinear")]
    AllCollinear,

    #[error("too few keypoints: {found}, need at least 3")]
    TooFewKeypoints { found: usize },

    #[error("no keygraph survived the thick-scalene filter")]
    NoKeygraphs,

    #[error("feature length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unsupported index version {found}, expected {expected}")]
    Version { found: u64, expected: u64 },

    #[error("corrupted index: {0}")]
    Corruption(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate correspondence: {0}")]
    DegenerateInput(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
