//! Minimal raster drawing for overlays and annotated frames.

use aos_core::raster::{Color, LabelRaster, Mask, RasterImage};
use aos_core::tracker::detect_blobs;

pub const GREEN: Color = [0.1, 0.9, 0.1];
pub const RED: Color = [0.95, 0.1, 0.1];
pub const YELLOW: Color = [0.95, 0.85, 0.1];

const TRACK_COLORS: [Color; 6] =
    [[0.1, 0.9, 0.9], [0.95, 0.3, 0.95], [0.95, 0.85, 0.1], [0.3, 0.6, 1.0], [1.0, 0.55, 0.1], [0.6, 1.0, 0.4]];

pub fn track_color(id: u32) -> Color {
    TRACK_COLORS[id as usize % TRACK_COLORS.len()]
}

// 3x5 glyphs, one row per entry, bit 2 = left column
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

fn put(img: &mut RasterImage, x: i64, y: i64, c: Color) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set(x as usize, y as usize, c);
    }
}

pub fn circle(img: &mut RasterImage, center: [f64; 2], radius: f64, c: Color) {
    let steps = ((radius * 8.0).ceil() as usize).max(16);
    for s in 0..steps {
        let a = s as f64 / steps as f64 * std::f64::consts::TAU;
        let x = center[0] + radius * a.cos();
        let y = center[1] + radius * a.sin();
        put(img, x.floor() as i64, y.floor() as i64, c);
    }
}

/// Draws the decimal digits of `text` with its top-left corner at `(x, y)`;
/// other characters leave a gap.
pub fn label(img: &mut RasterImage, x: i64, y: i64, text: &str, scale: i64, c: Color) {
    for (i, ch) in text.chars().enumerate() {
        let Some(d) = ch.to_digit(10) else { continue };
        let x0 = x + i as i64 * 4 * scale;
        for (row, bits) in DIGITS[d as usize].iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            put(img, x0 + col * scale + dx, y + row as i64 * scale + dy, c);
                        }
                    }
                }
            }
        }
    }
}

/// Paints mask pixels over `base` and circles every blob: green for true
/// and red for false positives against `truth`, yellow without truth.
pub fn detection_overlay(base: &RasterImage, mask: &Mask, truth: Option<&LabelRaster>) -> RasterImage {
    let mut out = base.clone();
    let positive = |x: usize, y: usize| truth.map(|t| t.get(x, y) > 0);
    let pick = |p: Option<bool>| match p {
        Some(true) => GREEN,
        Some(false) => RED,
        None => YELLOW,
    };
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                out.set(x, y, pick(positive(x, y)));
            }
        }
    }
    for b in detect_blobs(mask, 1) {
        let [x0, y0, x1, y1] = b.bounding_box;
        let hit = truth.map(|_| (y0..y1).any(|y| (x0..x1).any(|x| mask.get(x, y) && positive(x, y) == Some(true))));
        let r = (b.area as f64 / std::f64::consts::PI).sqrt() + 4.0;
        circle(&mut out, b.centroid, r, pick(hit));
    }
    out
}
