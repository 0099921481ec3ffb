//! Grayscale rasters, bilinear sampling and Gaussian pyramids.

mod io;

pub use io::{quantize, read_image, read_pgm, write_pgm, write_png, write_rgb_png};

use crate::{Error, Result};

/// Slack, in pixels, that absorbs floating-point residue at the image border.
pub const BORDER_EPS: f64 = 1e-9;

/// Row-major intensity raster. Intensities are kept as `f64` in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 255]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from a per-pixel function. Values are clamped to `[0, 255]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 255.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at real coordinates. `None` when `(x, y)` lies outside
    /// `[0, W-1] x [0, H-1]`, up to [`BORDER_EPS`] of round-off.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        // Negated comparisons also reject NaN.
        if !(x >= -BORDER_EPS && x <= max_x + BORDER_EPS && y >= -BORDER_EPS && y <= max_y + BORDER_EPS) {
            return None;
        }
        Some(self.blend(x.clamp(0.0, max_x), y.clamp(0.0, max_y)))
    }

    /// Bilinear sample with coordinates clamped into the image.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.blend(x, y)
    }

    #[inline]
    fn blend(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Copies the `w x h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidImage(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Self::new(w, h, data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Rec.601 luminance of an interleaved 8-bit RGB buffer.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    if rgb.len() != width * height * 3 {
        return Err(Error::InvalidImage(format!(
            "expected {} RGB bytes, got {}",
            width * height * 3,
            rgb.len()
        )));
    }
    let data = rgb
        .chunks_exact(3)
        .map(|px| {
            (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64).clamp(0.0, 255.0)
        })
        .collect();
    GrayImage::new(width, height, data)
}

/// Gaussian pyramid, coarsest level first.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Level by 1-based index (1 = coarsest).
    pub fn level(&self, l: usize) -> Option<&GrayImage> {
        l.checked_sub(1).and_then(|i| self.levels.get(i))
    }

    pub fn finest(&self) -> &GrayImage {
        self.levels.last().expect("pyramid has at least one level")
    }
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Mirror index into `[0, n)` without repeating the edge sample (`-1 -> 1`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable `[1, 4, 6, 4, 1] / 16` smoothing with reflected borders.
pub fn smooth(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            horiz[y * w + x] = BINOMIAL
                .iter()
                .enumerate()
                .map(|(k, c)| c * row[reflect(x as isize + k as isize - 2, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = BINOMIAL
                .iter()
                .enumerate()
                .map(|(k, c)| c * horiz[reflect(y as isize + k as isize - 2, h) * w + x])
                .sum::<f64>()
                .clamp(0.0, 255.0);
        }
    }
    GrayImage {
        width: w,
        height: h,
        data: out,
    }
}

/// Keeps every even-indexed pixel, giving `ceil(W/2) x ceil(H/2)`.
fn decimate(img: &GrayImage) -> GrayImage {
    let w = img.width.div_ceil(2);
    let h = img.height.div_ceil(2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(2 * x, 2 * y));
        }
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

/// Builds an `n_levels` Gaussian pyramid whose finest level is `img` itself.
pub fn build_pyramid(img: &GrayImage, n_levels: usize) -> Result<ImagePyramid> {
    if n_levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let min_side = 1usize << (n_levels - 1).min(usize::BITS as usize - 1);
    if img.width < min_side || img.height < min_side {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            levels: n_levels,
        });
    }
    let mut levels = vec![img.clone()];
    for _ in 1..n_levels {
        let next = decimate(&smooth(levels.last().unwrap()));
        levels.push(next);
    }
    levels.reverse();
    Ok(ImagePyramid { levels })
}
