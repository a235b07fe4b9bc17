use serde::{Deserialize, Serialize};

use crate::raster::Mask;

/// 8-connected component of an anomaly mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Mean of member pixel centers, in continuous image coordinates.
    pub centroid: [f64; 2],
    pub area: usize,
    /// Half-open pixel box `[x0, y0, x1, y1)`.
    pub bounding_box: [usize; 4],
}

/// Connected components of `mask` with at least `min_area` pixels, largest
/// first; equal areas are ordered by bounding-box origin (row, then column).
pub fn detect_blobs(mask: &Mask, min_area: usize) -> Vec<Blob> {
    let (w, h) = (mask.width(), mask.height());
    let on = mask.as_slice();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut blobs = Vec::new();

    for start in 0..w * h {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut sx, mut sy, mut area) = (0u64, 0u64, 0usize);
        let mut bb = [usize::MAX, usize::MAX, 0, 0];
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            sx += x as u64;
            sy += y as u64;
            area += 1;
            bb[0] = bb[0].min(x);
            bb[1] = bb[1].min(y);
            bb[2] = bb[2].max(x + 1);
            bb[3] = bb[3].max(y + 1);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if on[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if area >= min_area.max(1) {
            blobs.push(Blob { centroid: [sx as f64 / area as f64 + 0.5, sy as f64 / area as f64 + 0.5], area, bounding_box: bb });
        }
    }
    blobs.sort_by(|a, b| {
        b.area.cmp(&a.area).then(a.bounding_box[1].cmp(&b.bounding_box[1])).then(a.bounding_box[0].cmp(&b.bounding_box[0]))
    });
    blobs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(mask: &mut Mask, x0: usize, y0: usize, n: usize) {
        for y in y0..y0 + n {
            for x in x0..x0 + n {
                mask.set(x, y, true);
            }
        }
    }

    #[test]
    fn empty_mask_has_no_blobs() {
        assert!(detect_blobs(&Mask::new(16, 16), 1).is_empty());
    }

    #[test]
    fn corner_touching_squares_merge() {
        let mut m = Mask::new(10, 10);
        square(&mut m, 1, 1, 3);
        square(&mut m, 4, 4, 3);
        let blobs = detect_blobs(&m, 1);
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area, 18);
        assert_eq!(blobs[0].bounding_box, [1, 1, 7, 7]);
        assert!((blobs[0].centroid[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn min_area_filters_single_pixels() {
        let mut m = Mask::new(5, 5);
        m.set(2, 2, true);
        assert!(detect_blobs(&m, 2).is_empty());
        assert_eq!(detect_blobs(&m, 1)[0].centroid, [2.5, 2.5]);
    }

    #[test]
    fn ordering_by_area_then_origin() {
        let mut m = Mask::new(20, 20);
        square(&mut m, 10, 10, 2);
        square(&mut m, 1, 10, 2);
        square(&mut m, 15, 1, 2);
        square(&mut m, 5, 5, 3);
        let blobs = detect_blobs(&m, 1);
        let origins: Vec<_> = blobs.iter().map(|b| (b.bounding_box[0], b.bounding_box[1])).collect();
        assert_eq!(origins, vec![(5, 5), (15, 1), (1, 10), (10, 10)]);
    }

    #[test]
    fn centroid_inside_box() {
        let mut m = Mask::new(12, 12);
        for i in 0..10 {
            m.set(i, i, true);
            m.set(i, 0, true);
        }
        for b in detect_blobs(&m, 1) {
            assert!(b.centroid[0] >= b.bounding_box[0] as f64 && b.centroid[0] <= b.bounding_box[2] as f64);
            assert!(b.centroid[1] >= b.bounding_box[1] as f64 && b.centroid[1] <= b.bounding_box[3] as f64);
        }
    }
}
