//! Raster images, color conversion and segment rasterization.
//!
//! Continuous coordinates follow the pixel-area convention: pixel `(i, j)`
//! covers `[i, i + 1) x [j, j + 1)`, so its center sits at `(i + 0.5, j + 0.5)`
//! and a continuous point maps to the pixel `(floor(x), floor(y))`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// An RGB image with 8-bit channels, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Format(format!(
                "expected {} pixels for a {width}x{height} image, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Image of the given size filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, pixels: vec![rgb; width * height] }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Encodes the image as binary PPM (P6, maxval 255).
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.pixels.len() * 3);
        out.extend_from_slice(header.as_bytes());
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }

    /// Decodes a binary PPM (P6) with maxval 255.
    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = PpmCursor { bytes, pos: 0 };
        let magic = cursor.token()?;
        if magic != b"P6" {
            return Err(Error::Format(format!(
                "unsupported magic number {:?}, expected P6",
                String::from_utf8_lossy(magic)
            )));
        }
        let width = cursor.number("width")?;
        let height = cursor.number("height")?;
        let maxval = cursor.number("maxval")?;
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported maxval {maxval}, expected 255")));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err(Error::Format("missing whitespace after PPM header".into())),
        }
        let payload = &bytes[cursor.pos..];
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "PPM payload holds {} bytes, header declares {width}x{height} ({expected} bytes)",
                payload.len()
            )));
        }
        let pixels = payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(width, height, pixels)
    }

    /// Writes the image as PPM. The file is written to a sibling temporary
    /// path first and renamed into place.
    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_ppm_bytes())
    }
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated PPM header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("invalid PPM {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Writes through a temporary sibling file and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a PPM (P6) image from disk.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path.as_ref())?;
    Image::from_ppm_bytes(&bytes)
}

/// Luminance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Format(format!(
                "gray image of {width}x{height} cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// ITU-R 601 luma, scaled to `[0, 1]`.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let values = img
        .pixels
        .iter()
        .map(|&[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0)
        .collect();
    GrayImage { width: img.width, height: img.height, values }
}

/// A chrominance pair `(s cos h, s sin h)`.
pub type Chroma = [f64; 2];

/// Per-pixel chrominance, luminance discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaImage {
    width: usize,
    height: usize,
    values: Vec<Chroma>,
}

impl ChromaImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Chroma] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Chroma {
        self.values[y * self.width + x]
    }
}

/// Hue in degrees `[0, 360)` and saturation in `[0, 1]` of an RGB triple.
///
/// Both are ratios of integer channel differences, so scaling all three
/// channels by a common factor leaves them bit-identical whenever the
/// scaled channels are still integers.
pub fn hue_saturation(rgb: [u8; 3]) -> (f64, f64) {
    let [r, g, b] = rgb.map(i32::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0 {
        return (0.0, 0.0);
    }
    let saturation = delta as f64 / max as f64;
    let sector = if max == r {
        (g - b) as f64 / delta as f64
    } else if max == g {
        2.0 + (b - r) as f64 / delta as f64
    } else {
        4.0 + (r - g) as f64 / delta as f64
    };
    let mut hue = 60.0 * sector;
    if hue < 0.0 {
        hue += 360.0;
    }
    if hue >= 360.0 {
        hue -= 360.0;
    }
    (hue, saturation)
}

/// Chrominance of an HSV triple. The value channel does not participate.
pub fn chroma_from_hsv(hue_deg: f64, saturation: f64, _value: f64) -> Chroma {
    let h = hue_deg.to_radians();
    [saturation * h.cos(), saturation * h.sin()]
}

#[inline]
pub fn chroma_of(rgb: [u8; 3]) -> Chroma {
    let (h, s) = hue_saturation(rgb);
    chroma_from_hsv(h, s, 1.0)
}

pub fn to_chroma(img: &Image) -> ChromaImage {
    let values = img.pixels.iter().map(|&px| chroma_of(px)).collect();
    ChromaImage { width: img.width, height: img.height, values }
}

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (i64, i64);

fn to_pixel(p: Point) -> Pixel {
    (p.x.floor() as i64, p.y.floor() as i64)
}

/// 8-connected walk between two integer pixels, without bounds checks.
///
/// The walk is always generated from the lexicographically smaller endpoint
/// and reversed when needed, so the pixel set never depends on direction.
pub(crate) fn line_pixels(a: Pixel, b: Pixel) -> Vec<Pixel> {
    if b < a {
        let mut out = line_pixels(b, a);
        out.reverse();
        return out;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    if dx.abs() >= dy.abs() {
        let n = dx.abs();
        if n == 0 {
            return vec![a];
        }
        (0..=n).map(|k| (a.0 + k * dx.signum(), a.1 + div_round(k * dy, n))).collect()
    } else {
        let n = dy.abs();
        (0..=n).map(|k| (a.0 + div_round(k * dx, n), a.1 + k * dy.signum())).collect()
    }
}

/// `round(num / den)` with halves rounded up, for `den > 0`.
fn div_round(num: i64, den: i64) -> i64 {
    (2 * num + den).div_euclid(2 * den)
}

/// Pixels visited walking from `p0` to `p1`, both endpoints included.
///
/// Fails when either endpoint lies outside a `width x height` raster.
pub fn rasterize_segment(p0: Point, p1: Point, width: usize, height: usize) -> Result<Vec<Pixel>> {
    let a = to_pixel(p0);
    let b = to_pixel(p1);
    for (p, px) in [(p0, a), (p1, b)] {
        if !p.x.is_finite() || !p.y.is_finite() || px.0 < 0 || px.1 < 0 || px.0 >= width as i64 || px.1 >= height as i64 {
            return Err(Error::OutOfBounds { x: p.x, y: p.y, width, height });
        }
    }
    Ok(line_pixels(a, b))
}

/// Componentwise mean chrominance over the pixels of a segment.
pub fn mean_chrominance_along(chroma: &ChromaImage, p0: Point, p1: Point) -> Result<Chroma> {
    let pixels = rasterize_segment(p0, p1, chroma.width, chroma.height)?;
    let mut sum = [0.0, 0.0];
    for &(x, y) in &pixels {
        let c = chroma.get(x as usize, y as usize);
        sum[0] += c[0];
        sum[1] += c[1];
    }
    let n = pixels.len() as f64;
    Ok([sum[0] / n, sum[1] / n])
}

/// Draws a segment, silently clipping pixels outside the image.
pub fn draw_line(img: &mut Image, p0: Point, p1: Point, rgb: [u8; 3]) {
    if !(p0.x.is_finite() && p0.y.is_finite() && p1.x.is_finite() && p1.y.is_finite()) {
        return;
    }
    // keep the walk bounded for wild coordinates
    let limit = 4.0 * (img.width + img.height) as f64;
    let clamp = |p: Point| Point::new(p.x.clamp(-limit, limit), p.y.clamp(-limit, limit));
    for (x, y) in line_pixels(to_pixel(clamp(p0)), to_pixel(clamp(p1))) {
        if x >= 0 && y >= 0 && (x as usize) < img.width && (y as usize) < img.height {
            img.set(x as usize, y as usize, rgb);
        }
    }
}
