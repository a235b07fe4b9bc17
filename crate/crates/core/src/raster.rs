//! Raster containers shared by every stage of the pipeline.
//!
//! Continuous image coordinates put the top-left corner of the raster at
//! `(0, 0)` and the center of pixel `(x, y)` at `(x + 0.5, y + 0.5)`.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RGB color with components in `[0, 1]`.
pub type Color = [f32; 3];

/// H×W×3 color raster. Values are kept in floating point and are only
/// quantized to 8 bits on export.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<Color>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, color: Color) -> Self {
        Self { width, height, data: vec![color; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<Color>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::RasterMismatch(width, height, data.len(), 1));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Color) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[Color] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [Color] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Color {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Color) {
        self.data[y * self.width + x] = c;
    }

    /// True when `(u, v)` lies strictly inside the raster rectangle.
    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u > 0.0 && v > 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Bilinear sample at continuous coordinates, clamping to the edge.
    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let fx = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let p00 = self.data[row0 + x0];
        let p10 = self.data[row0 + x1];
        let p01 = self.data[row1 + x0];
        let p11 = self.data[row1 + x1];
        let w00 = (1.0 - ax) * (1.0 - ay);
        let w10 = ax * (1.0 - ay);
        let w01 = (1.0 - ax) * ay;
        let w11 = ax * ay;
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = w00 * p00[c] as f64 + w10 * p10[c] as f64 + w01 * p01[c] as f64 + w11 * p11[c] as f64;
        }
        out
    }

    /// Round-trip through 8-bit storage, as happens on PNG export.
    pub fn quantized(&self) -> Self {
        let data = self.data.iter().map(|p| p.map(|c| quantize(c) as f32 / 255.0)).collect();
        Self { width: self.width, height: self.height, data }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.get(x as usize, y as usize);
            Rgb([quantize(p[0]), quantize(p[1]), quantize(p[2])])
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0]).collect();
        Self { width: w as usize, height: h as usize, data }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8().save(path).map_err(|source| Error::Image { path: path.into(), source })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub(crate) fn check_same_size(&self, w: usize, h: usize) -> Result<()> {
        if self.width != w || self.height != h {
            return Err(Error::RasterMismatch(self.width, self.height, w, h));
        }
        Ok(())
    }
}

#[inline]
pub fn quantize(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary per-pixel raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::RasterMismatch(width, height, data.len(), 1));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_clear(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_gray8().save(path).map_err(|source| Error::Image { path: path.into(), source })
    }

    /// Any non-zero sample counts as set.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?.to_luma8();
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p[0] != 0).collect();
        Ok(Self { width: w as usize, height: h as usize, data })
    }
}

/// Per-pixel target labels: `0` is background, `k` marks target `k - 1`.
///
/// `num_labels` is the number of targets the raster is meant to describe,
/// which can exceed the number of labels actually present (a target may lie
/// outside the view).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRaster {
    width: usize,
    height: usize,
    num_labels: usize,
    data: Vec<u8>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, num_labels: usize) -> Self {
        assert!(num_labels < 256, "at most 255 labels fit in 8 bits");
        Self { width, height, num_labels, data: vec![0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, num_labels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::RasterMismatch(width, height, data.len(), 1));
        }
        if data.iter().any(|&l| l as usize > num_labels) {
            return Err(Error::InvalidScene(format!("label raster holds labels beyond {num_labels}")));
        }
        Ok(Self { width, height, num_labels, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.data[y * self.width + x] = label;
    }

    #[inline]
    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    /// Pixel count per label, index 0 holding the background count.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_labels + 1];
        for &l in &self.data {
            h[l as usize] += 1;
        }
        h
    }

    pub fn to_mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|&l| l != 0).collect() }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
            .save(path)
            .map_err(|source| Error::Image { path: path.into(), source })
    }

    pub fn load_png(path: impl AsRef<Path>, num_labels: usize) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?.to_luma8();
        let (w, h) = img.dimensions();
        Self::from_vec(w as usize, h as usize, num_labels, img.into_raw()).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers_exactly() {
        let img = RasterImage::from_fn(4, 3, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.5]);
        for y in 0..3 {
            for x in 0..4 {
                let s = img.sample(x as f64 + 0.5, y as f64 + 0.5);
                let p = img.get(x, y);
                for c in 0..3 {
                    assert_eq!(s[c], p[c] as f64);
                }
            }
        }
        // midway between two centers
        let s = img.sample(1.0, 0.5);
        assert!((s[0] - 0.125).abs() < 1e-7);
    }

    #[test]
    fn sample_clamps_at_edges() {
        let img = RasterImage::from_fn(2, 2, |x, _| [x as f32, 0.0, 0.0]);
        assert_eq!(img.sample(0.01, 0.01)[0], 0.0);
        assert_eq!(img.sample(1.99, 1.99)[0], 1.0);
    }

    #[test]
    fn png_round_trip_is_lossless_for_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::from_fn(5, 7, |x, y| [(x * 40) as f32 / 255.0, (y * 30) as f32 / 255.0, 1.0]);
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        assert_eq!(RasterImage::load_png(&path).unwrap(), img);

        let mut labels = LabelRaster::new(3, 2, 2);
        labels.set(1, 1, 2);
        let lp = dir.path().join("l.png");
        labels.save_png(&lp).unwrap();
        assert_eq!(LabelRaster::load_png(&lp, 2).unwrap(), labels);
    }

    #[test]
    fn label_histogram_counts_background() {
        let mut l = LabelRaster::new(2, 2, 3);
        l.set(0, 0, 1);
        l.set(1, 1, 3);
        assert_eq!(l.histogram(), vec![2, 1, 0, 1]);
        assert_eq!(l.to_mask().count(), 2);
    }
}
