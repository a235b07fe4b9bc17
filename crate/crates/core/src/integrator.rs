//! Integral images: every camera view is back-projected onto the focal plane
//! and averaged, on a raster rendered from the array's center perspective.
//!
//! Work is a gather over integral pixels. Each integral pixel is lifted to
//! the plane through the reference view, transferred into every camera by a
//! plane-induced homography and sampled bilinearly. Only cameras that see
//! the point contribute, and the average divides by that count.

use std::path::Path;

use image::{GrayImage, Luma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ArrayRig, FocalPlane, PixelRays, PlaneHomography, View};
use crate::raster::{Mask, RasterImage};

/// Synchronized images of all cameras at one instant.
#[derive(Debug, Clone)]
pub struct FrameSet {
    views: Vec<View>,
    images: Vec<RasterImage>,
    reference: usize,
    frame_index: usize,
}

impl FrameSet {
    /// Frame set over the cameras of `rig`, referenced to its center camera.
    pub fn from_rig(rig: &ArrayRig, images: Vec<RasterImage>, frame_index: usize) -> Result<Self> {
        Self::new(rig.cameras().to_vec(), images, rig.center_index(), frame_index)
    }

    /// Frame set over arbitrary views; `reference` selects the view whose
    /// perspective defines the integral raster.
    pub fn new(views: Vec<View>, images: Vec<RasterImage>, reference: usize, frame_index: usize) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidFrameSet("no cameras".into()));
        }
        if views.len() != images.len() {
            return Err(Error::InvalidFrameSet(format!("{} images for {} cameras", images.len(), views.len())));
        }
        if reference >= views.len() {
            return Err(Error::InvalidFrameSet(format!("reference {reference} out of range")));
        }
        for (k, (v, img)) in views.iter().zip(&images).enumerate() {
            if img.width() != v.camera.width() || img.height() != v.camera.height() {
                return Err(Error::InvalidFrameSet(format!(
                    "image {k} is {}x{}, camera expects {:?}",
                    img.width(),
                    img.height(),
                    v.camera.resolution()
                )));
            }
        }
        Ok(Self { views, images, reference, frame_index })
    }

    #[inline]
    pub fn views(&self) -> &[View] {
        &self.views
    }

    #[inline]
    pub fn images(&self) -> &[RasterImage] {
        &self.images
    }

    #[inline]
    pub fn reference(&self) -> usize {
        self.reference
    }

    #[inline]
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.views.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Subset of the cameras, in the given order. The reference view must be
    /// among them.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let reference = indices
            .iter()
            .position(|&k| k == self.reference)
            .ok_or_else(|| Error::InvalidFrameSet("subset must contain the reference view".into()))?;
        let mut views = Vec::with_capacity(indices.len());
        let mut images = Vec::with_capacity(indices.len());
        for &k in indices {
            if k >= self.len() {
                return Err(Error::InvalidFrameSet(format!("camera {k} out of range")));
            }
            views.push(self.views[k]);
            images.push(self.images[k].clone());
        }
        Self::new(views, images, reference, self.frame_index)
    }
}

/// Averaged back-projection on the focal-plane raster.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    pub raster: RasterImage,
    /// Number of contributing cameras per pixel; zero marks invalid pixels.
    pub count_map: Vec<u16>,
    pub reference_view: usize,
}

impl IntegralImage {
    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn count(&self, x: usize, y: usize) -> u16 {
        self.count_map[y * self.raster.width() + x]
    }

    pub fn valid_mask(&self) -> Mask {
        Mask::from_vec(self.raster.width(), self.raster.height(), self.count_map.iter().map(|&c| c > 0).collect())
            .expect("count map matches raster")
    }

    /// Writes `integral_<frame>.png` and `count_<frame>.png` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, frame: usize) -> Result<()> {
        let dir = dir.as_ref();
        self.raster.save_png(dir.join(integral_file_name(frame)))?;
        let path = dir.join(count_file_name(frame));
        GrayImage::from_fn(self.width() as u32, self.height() as u32, |x, y| {
            Luma([self.count(x as usize, y as usize).min(255) as u8])
        })
        .save(&path)
        .map_err(|source| Error::Image { path, source })
    }

    pub fn load(dir: impl AsRef<Path>, frame: usize, reference_view: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let raster = RasterImage::load_png(dir.join(integral_file_name(frame)))?;
        let path = dir.join(count_file_name(frame));
        let counts = image::open(&path).map_err(|source| Error::Image { path: path.clone(), source })?.to_luma8();
        if counts.width() as usize != raster.width() || counts.height() as usize != raster.height() {
            return Err(Error::format(path, "count map size differs from integral"));
        }
        let count_map = counts.pixels().map(|p| p[0] as u16).collect();
        Ok(Self { raster, count_map, reference_view })
    }
}

pub fn integral_file_name(frame: usize) -> String {
    format!("integral_{frame:04}.png")
}

pub fn count_file_name(frame: usize) -> String {
    format!("count_{frame:04}.png")
}

/// Integrates one synchronized frame set onto `plane`.
pub fn integrate(frames: &FrameSet, plane: &FocalPlane) -> Result<IntegralImage> {
    for (k, v) in frames.views.iter().enumerate() {
        if !(v.pose.center().z > plane.height_m()) {
            return Err(Error::InvalidFrameSet(format!("camera {k} is not above the focal plane")));
        }
    }
    let reference = &frames.views[frames.reference];
    let grid = PixelRays::for_grid(reference, plane);
    let transfers: Vec<PlaneHomography> = frames.views.iter().map(|v| grid.plane_homography(plane.height_m(), v)).collect();

    let [w, h] = plane.resolution();
    let mut raster = RasterImage::new(w, h);
    let mut count_map = vec![0u16; w * h];
    let height = plane.height_m();
    let extent = *plane.extent();

    raster.pixels_mut().par_chunks_mut(w).zip(count_map.par_chunks_mut(w)).enumerate().for_each(|(y, (row, counts))| {
        let v = y as f64 + 0.5;
        for x in 0..w {
            let u = x as f64 + 0.5;
            match grid.plane_point(u, v, height) {
                Some(p) if extent.contains(p.x, p.y) => {}
                _ => continue,
            }
            let mut acc = [0.0f64; 3];
            let mut n = 0u16;
            for (t, img) in transfers.iter().zip(&frames.images) {
                let Some([su, sv]) = t.map(u, v) else { continue };
                if !img.contains(su, sv) {
                    continue;
                }
                let s = img.sample(su, sv);
                acc[0] += s[0];
                acc[1] += s[1];
                acc[2] += s[2];
                n += 1;
            }
            if n > 0 {
                let inv = 1.0 / n as f64;
                row[x] = [
                    (acc[0] * inv).clamp(0.0, 1.0) as f32,
                    (acc[1] * inv).clamp(0.0, 1.0) as f32,
                    (acc[2] * inv).clamp(0.0, 1.0) as f32,
                ];
                counts[x] = n;
            }
        }
    });

    if count_map.iter().all(|&c| c == 0) {
        return Err(Error::EmptyIntegral);
    }
    Ok(IntegralImage { raster, count_map, reference_view: frames.reference })
}

/// Frame-wise integration of synchronized per-camera sequences.
pub fn integrate_video(
    views: &[View],
    reference: usize,
    sequences: &[Vec<RasterImage>],
    plane: &FocalPlane,
) -> Result<Vec<IntegralImage>> {
    if sequences.len() != views.len() {
        return Err(Error::LengthMismatch { expected: views.len(), found: sequences.len() });
    }
    let frames = sequences.first().map_or(0, Vec::len);
    for s in sequences {
        if s.len() != frames {
            return Err(Error::LengthMismatch { expected: frames, found: s.len() });
        }
    }
    (0..frames)
        .map(|n| {
            let images = sequences.iter().map(|s| s[n].clone()).collect();
            let set = FrameSet::new(views.to_vec(), images, reference, n)?;
            integrate(&set, plane)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraModel, Pose, Rect};
    use nalgebra::Vector3;

    fn small_rig(n: usize) -> ArrayRig {
        let cam = CameraModel::from_fov(40.0, 64, 64).unwrap();
        ArrayRig::linear(n, 1.0, 30.0, cam).unwrap()
    }

    fn noise(w: usize, h: usize, seed: u32) -> RasterImage {
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
        RasterImage::from_fn(w, h, |_, _| {
            let mut next = || {
                s ^= s << 13;
                s ^= s >> 17;
                s ^= s << 5;
                (s % 256) as f32 / 255.0
            };
            [next(), next(), next()]
        })
    }

    #[test]
    fn single_camera_is_its_own_integral() {
        let rig = small_rig(3);
        let v = *rig.reference();
        let img = noise(64, 64, 3);
        let set = FrameSet::new(vec![v], vec![img.clone()], 0, 0).unwrap();
        let plane = FocalPlane::for_reference(&v.camera, &v.pose, 0.0).unwrap();
        let out = integrate(&set, &plane).unwrap();
        assert!(out.count_map.iter().all(|&c| c == 1));
        for (a, b) in out.raster.pixels().iter().zip(img.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identical_colocated_cameras_average_to_one_view() {
        let rig = small_rig(3);
        let v = *rig.reference();
        let img = noise(64, 64, 9);
        let set = FrameSet::new(vec![v; 10], vec![img.clone(); 10], 4, 0).unwrap();
        let plane = FocalPlane::for_reference(&v.camera, &v.pose, 0.0).unwrap();
        let out = integrate(&set, &plane).unwrap();
        assert!(out.count_map.iter().all(|&c| c == 10));
        for (a, b) in out.raster.pixels().iter().zip(img.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn camera_order_does_not_matter() {
        let rig = small_rig(5);
        let images: Vec<_> = (0..5).map(|k| noise(64, 64, k as u32 + 1)).collect();
        let set = FrameSet::from_rig(&rig, images, 0).unwrap();
        let plane = FocalPlane::for_reference(&rig.reference().camera, &rig.reference().pose, 0.0).unwrap();
        let a = integrate(&set, &plane).unwrap();
        let b = integrate(&set.select(&[4, 0, 3, 2, 1]).unwrap(), &plane).unwrap();
        assert_eq!(a.count_map, b.count_map);
        for (p, q) in a.raster.pixels().iter().zip(b.raster.pixels()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() <= 1e-12, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn count_map_matches_brute_force_projection() {
        let cam = CameraModel::from_fov(50.0, 256, 256).unwrap();
        let rig = ArrayRig::linear(6, 3.0, 20.0, cam).unwrap();
        let images: Vec<_> = (0..6).map(|k| noise(256, 256, k)).collect();
        let set = FrameSet::from_rig(&rig, images, 0).unwrap();
        let r = rig.reference();
        let plane = FocalPlane::for_reference(&r.camera, &r.pose, 0.0).unwrap();
        let out = integrate(&set, &plane).unwrap();
        for y in 0..256 {
            for x in 0..256 {
                let g = crate::geometry::pixel_to_ground([x as f64 + 0.5, y as f64 + 0.5], &r.camera, &r.pose, &plane).unwrap();
                let expected = rig
                    .cameras()
                    .iter()
                    .filter(|v| {
                        let p = crate::geometry::ground_to_pixel(&g, &v.camera, &v.pose).unwrap();
                        p.pixel[0] > 0.0 && p.pixel[1] > 0.0 && p.pixel[0] < 256.0 && p.pixel[1] < 256.0
                    })
                    .count();
                assert_eq!(out.count(x, y) as usize, expected, "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn plane_outside_all_views_is_empty() {
        let rig = small_rig(2);
        let images = vec![noise(64, 64, 1), noise(64, 64, 2)];
        let set = FrameSet::from_rig(&rig, images, 0).unwrap();
        let plane = FocalPlane::new(0.0, Rect::new([500.0, 500.0], [510.0, 510.0]), [64, 64]).unwrap();
        assert!(matches!(integrate(&set, &plane), Err(Error::EmptyIntegral)));
    }

    #[test]
    fn camera_below_plane_is_rejected() {
        let cam = CameraModel::from_fov(40.0, 8, 8).unwrap();
        let v = View::new(cam, Pose::nadir(Vector3::new(0.0, 0.0, 1.0)));
        let set = FrameSet::new(vec![v], vec![RasterImage::new(8, 8)], 0, 0).unwrap();
        let plane = FocalPlane::new(2.0, Rect::centered(4.0, 4.0), [8, 8]).unwrap();
        assert!(integrate(&set, &plane).is_err());
    }

    #[test]
    fn frame_set_validates_shapes() {
        let rig = small_rig(2);
        assert!(FrameSet::from_rig(&rig, vec![RasterImage::new(64, 64)], 0).is_err());
        assert!(FrameSet::from_rig(&rig, vec![RasterImage::new(64, 64), RasterImage::new(32, 64)], 0).is_err());
    }

    #[test]
    fn video_checks_lengths_and_is_deterministic() {
        let rig = small_rig(2);
        let r = rig.reference();
        let plane = FocalPlane::for_reference(&r.camera, &r.pose, 0.0).unwrap();
        let a = vec![noise(64, 64, 1); 3];
        let b = vec![noise(64, 64, 2); 2];
        assert!(matches!(integrate_video(rig.cameras(), 1, &[a.clone(), b], &plane), Err(Error::LengthMismatch { .. })));
        let out = integrate_video(rig.cameras(), 1, &[a.clone(), a], &plane).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
    }

    #[test]
    fn save_and_load_round_trip() {
        let rig = small_rig(2);
        let r = rig.reference();
        let plane = FocalPlane::for_reference(&r.camera, &r.pose, 0.0).unwrap();
        let set = FrameSet::from_rig(&rig, vec![noise(64, 64, 4), noise(64, 64, 5)], 0).unwrap();
        let out = integrate(&set, &plane).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.save(dir.path(), 7).unwrap();
        assert!(dir.path().join("integral_0007.png").exists());
        let back = IntegralImage::load(dir.path(), 7, 1).unwrap();
        assert_eq!(back.count_map, out.count_map);
        assert_eq!(back.raster, out.raster.quantized());
    }
}
