//! Pixel grids shared by every stage: RGB input images, luma images, binary masks.
//!
//! All grids are row-major with the origin at the top-left corner; `x` is the
//! column and `y` the row.

use serde::{Deserialize, Serialize};

/// Integer grid coordinate (`x` = column, `y` = row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: usize,
    pub y: usize,
}

impl PixelPoint {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl std::fmt::Display for PixelPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    /// Builds an image from row-major RGB triples.
    ///
    /// Returns `None` when a dimension is zero or the pixel count does not
    /// match `width * height`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Option<Self> {
        (width > 0 && height > 0 && pixels.len() == width * height).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniformly colored image. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    /// Promotes a luma image to RGB by replicating the channel.
    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            pixels: gray.pixels.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x < self.width && p.y < self.height
    }
}

/// Luma of one RGB triple with BT.601 weights, rounded half up.
///
/// Integer form of `round(0.299 R + 0.587 G + 0.114 B)`; exact for every input.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    let scaled = 299 * r + 587 * g + 114 * b;
    ((scaled + 500) / 1000).min(255) as u8
}

/// Converts an RGB image to its luma channel.
pub fn to_luma(image: &Image) -> GrayImage {
    GrayImage {
        width: image.width,
        height: image.height,
        pixels: image.pixels.iter().copied().map(luma).collect(),
    }
}

/// 8-bit single-channel intensity image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (width > 0 && height > 0 && pixels.len() == width * height).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// 256-bin intensity histogram.
    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.pixels {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// Per-pixel foreground flags (`true` = foreground / white).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        for row in self.pixels.chunks(self.width) {
            let line: String = row.iter().map(|&v| if v { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl BinaryMask {
    /// All-background mask. Panics on a zero dimension.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<bool>) -> Option<Self> {
        (width > 0 && height > 0 && pixels.len() == width * height).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Parses rows of `'1'`/`'#'` (foreground) and `'0'`/`'.'` (background).
    ///
    /// Mostly useful for small hand-written grids in tests.
    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        assert!(
            rows.iter().all(|r| r.len() == width),
            "rows must have equal length"
        );
        Self::from_fn(width, height, |x, y| {
            matches!(rows[y].as_bytes()[x], b'1' | b'#')
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn is_foreground(&self, p: PixelPoint) -> bool {
        self.contains(p) && self.get(p.x, p.y)
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|&v| v)
    }

    /// Foreground positions in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = PixelPoint> + '_ {
        let w = self.width;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| PixelPoint::new(i % w, i / w))
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| !v).collect(),
        }
    }

    /// Pixel-wise union. Panics if dimensions differ.
    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a || b)
    }

    /// Pixel-wise intersection. Panics if dimensions differ.
    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && b)
    }

    /// `true` when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dimensions() == other.dimensions()
            && self
                .pixels
                .iter()
                .zip(&other.pixels)
                .all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!(self.dimensions(), other.dimensions(), "mask dimensions differ");
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Nearest-neighbor upscaling by an integer factor.
    pub fn upscaled(&self, factor: usize) -> Self {
        assert!(factor > 0);
        Self::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.get(x / factor, y / factor)
        })
    }

    /// Copy shifted by `(dx, dy)`; pixels moved out of bounds are dropped.
    pub fn translated(&self, dx: isize, dy: isize) -> Self {
        let mut out = Self::new(self.width, self.height);
        for p in self.foreground() {
            let nx = p.x as isize + dx;
            let ny = p.y as isize + dy;
            if (0..self.width as isize).contains(&nx) && (0..self.height as isize).contains(&ny) {
                out.set(nx as usize, ny as usize, true);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn luma_reference_values() {
        assert_eq!(luma([255, 255, 255]), 255);
        assert_eq!(luma([100, 100, 100]), 100);
        assert_eq!(luma([255, 0, 0]), 76);
        assert_eq!(luma([0, 0, 0]), 0);
    }

    #[test]
    fn luma_matches_float_formula() {
        // Float evaluation as an independent route; skip exact .5 boundaries.
        for r in (0..=255u32).step_by(5) {
            for g in (0..=255u32).step_by(7) {
                for b in (0..=255u32).step_by(11) {
                    let exact = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                    if (exact.fract() - 0.5).abs() < 1e-9 {
                        continue;
                    }
                    assert_eq!(luma([r as u8, g as u8, b as u8]) as f64, exact.round());
                }
            }
        }
    }

    #[test]
    fn to_luma_keeps_dimensions() {
        let img = Image::filled(7, 3, [10, 20, 30]);
        let gray = to_luma(&img);
        assert_eq!(gray.dimensions(), (7, 3));
        assert!(gray.pixels().iter().all(|&v| v == luma([10, 20, 30])));
    }

    #[test]
    fn from_pixels_rejects_bad_sizes() {
        assert!(BinaryMask::from_pixels(0, 3, vec![]).is_none());
        assert!(BinaryMask::from_pixels(2, 2, vec![true; 3]).is_none());
        assert!(GrayImage::from_pixels(2, 1, vec![1, 2]).is_some());
    }

    #[test]
    fn mask_rows_and_counts() {
        let m = BinaryMask::from_rows(&["10", "01", "11"]);
        assert_eq!(m.dimensions(), (2, 3));
        assert_eq!(m.foreground_count(), 4);
        let pts: Vec<_> = m.foreground().collect();
        assert_eq!(pts[0], PixelPoint::new(0, 0));
        assert_eq!(pts[1], PixelPoint::new(1, 1));
        assert_eq!(m.inverted().foreground_count(), 2);
    }

    proptest! {
        #[test]
        fn luma_gray_fixed_point(v in 0u8..=255) {
            prop_assert_eq!(luma([v, v, v]), v);
        }

        #[test]
        fn luma_monotone_per_channel(r in 0u8..=255, g in 0u8..=255, b in 0u8..=255, ch in 0usize..3) {
            let base = [r, g, b];
            if base[ch] < 255 {
                let mut up = base;
                up[ch] += 1;
                prop_assert!(luma(up) >= luma(base));
            }
        }
    }
}
