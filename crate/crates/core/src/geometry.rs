//! Pinhole cameras, poses and ray/plane registration.
//!
//! World frame is right-handed with Z up; the default focal plane is the
//! ground at `Z = 0`. Camera frames follow the usual computer-vision layout:
//! X right, Y down, Z along the optical axis. A [`Pose`] maps world points
//! into the camera frame, `x_cam = R * x_world + t`.

use nalgebra::{Matrix3, RowVector3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

const FOV_REL_TOL: f64 = 1e-6;
const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    focal_length_px: f64,
    principal_point: [f64; 2],
    resolution: [usize; 2],
    fov_deg: f64,
    radial_distortion: [f64; 2],
}

impl CameraModel {
    /// Camera whose field of view spans the shorter image side, with the
    /// principal point at the raster center.
    pub fn from_fov(fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidCamera(format!("field of view {fov_deg} outside (0, 180)")));
        }
        let half = width.min(height) as f64 / 2.0;
        let focal = half / (fov_deg.to_radians() / 2.0).tan();
        Self::new(focal, [width as f64 / 2.0, height as f64 / 2.0], [width, height], [0.0, 0.0])
    }

    /// Camera from intrinsics; the field of view is derived from the focal length.
    pub fn new(
        focal_length_px: f64,
        principal_point: [f64; 2],
        resolution: [usize; 2],
        radial_distortion: [f64; 2],
    ) -> Result<Self> {
        if !(focal_length_px > 0.0) || !focal_length_px.is_finite() {
            return Err(Error::InvalidCamera(format!("focal length {focal_length_px} must be positive")));
        }
        let fov_deg = fov_from_focal(focal_length_px, resolution);
        Self::with_fov(focal_length_px, principal_point, resolution, fov_deg, radial_distortion)
    }

    /// Fully specified camera; rejects a field of view that disagrees with
    /// the focal length and resolution.
    pub fn with_fov(
        focal_length_px: f64,
        principal_point: [f64; 2],
        resolution: [usize; 2],
        fov_deg: f64,
        radial_distortion: [f64; 2],
    ) -> Result<Self> {
        if !(focal_length_px > 0.0) || !focal_length_px.is_finite() {
            return Err(Error::InvalidCamera(format!("focal length {focal_length_px} must be positive")));
        }
        if resolution[0] == 0 || resolution[1] == 0 {
            return Err(Error::InvalidCamera(format!("resolution {resolution:?} must be positive")));
        }
        if !principal_point.iter().all(|c| c.is_finite()) || !radial_distortion.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidCamera("non-finite intrinsics".into()));
        }
        let expected = (resolution[0].min(resolution[1]) as f64 / 2.0) / focal_length_px;
        let actual = (fov_deg.to_radians() / 2.0).tan();
        if !((actual - expected).abs() <= FOV_REL_TOL * expected) {
            return Err(Error::InvalidCamera(format!(
                "fov {fov_deg}° inconsistent with focal {focal_length_px} px at {resolution:?}"
            )));
        }
        Ok(Self { focal_length_px, principal_point, resolution, fov_deg, radial_distortion })
    }

    pub fn with_distortion(mut self, k1: f64, k2: f64) -> Self {
        self.radial_distortion = [k1, k2];
        self
    }

    #[inline]
    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_px
    }

    #[inline]
    pub fn principal_point(&self) -> [f64; 2] {
        self.principal_point
    }

    #[inline]
    pub fn resolution(&self) -> [usize; 2] {
        self.resolution
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.resolution[0]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.resolution[1]
    }

    #[inline]
    pub fn fov_deg(&self) -> f64 {
        self.fov_deg
    }

    #[inline]
    pub fn radial_distortion(&self) -> [f64; 2] {
        self.radial_distortion
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        let f = self.focal_length_px;
        let [cx, cy] = self.principal_point;
        Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0)
    }

    fn inverse_intrinsic_matrix(&self) -> Matrix3<f64> {
        let f = self.focal_length_px;
        let [cx, cy] = self.principal_point;
        Matrix3::new(1.0 / f, 0.0, -cx / f, 0.0, 1.0 / f, -cy / f, 0.0, 0.0, 1.0)
    }

    fn contains_inclusive(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= self.resolution[0] as f64 && p[1] <= self.resolution[1] as f64
    }

    /// Applies the radial model to an undistorted pixel.
    pub fn distort_point(&self, p: [f64; 2]) -> [f64; 2] {
        let [k1, k2] = self.radial_distortion;
        let f = self.focal_length_px;
        let [cx, cy] = self.principal_point;
        let x = (p[0] - cx) / f;
        let y = (p[1] - cy) / f;
        let r2 = x * x + y * y;
        let s = 1.0 + k1 * r2 + k2 * r2 * r2;
        [cx + f * x * s, cy + f * y * s]
    }

    /// Inverts [`distort_point`](Self::distort_point) by fixed-point iteration
    /// (at most 10 steps, stopping once a step moves less than 1e-8 px).
    pub fn undistort_point(&self, p: [f64; 2]) -> [f64; 2] {
        let [k1, k2] = self.radial_distortion;
        let f = self.focal_length_px;
        let [cx, cy] = self.principal_point;
        let xd = (p[0] - cx) / f;
        let yd = (p[1] - cy) / f;
        let (mut x, mut y) = (xd, yd);
        for _ in 0..10 {
            let r2 = x * x + y * y;
            let s = 1.0 + k1 * r2 + k2 * r2 * r2;
            let (nx, ny) = (xd / s, yd / s);
            let step = ((nx - x).powi(2) + (ny - y).powi(2)).sqrt() * f;
            x = nx;
            y = ny;
            if step < 1e-8 {
                break;
            }
        }
        [cx + f * x, cy + f * y]
    }

    fn has_distortion(&self) -> bool {
        self.radial_distortion != [0.0, 0.0]
    }
}

/// Focal length whose field of view over the shorter side is `fov_deg`.
pub fn focal_from_fov(fov_deg: f64, resolution: [usize; 2]) -> f64 {
    (resolution[0].min(resolution[1]) as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan()
}

fn fov_from_focal(focal: f64, resolution: [usize; 2]) -> f64 {
    2.0 * ((resolution[0].min(resolution[1]) as f64 / 2.0) / focal).atan().to_degrees()
}

/// World→camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ORTHO_TOL) {
            return Err(Error::InvalidPose(format!("rotation is not orthonormal (|RᵀR - I| = {err:e})")));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::InvalidPose("rotation is a reflection".into()));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_center(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        Self::new(rotation, -(rotation * center))
    }

    /// Nadir-looking camera at `center`: image X along world +X, image Y
    /// along world −Y, optical axis along world −Z.
    pub fn nadir(center: Vector3<f64>) -> Self {
        let r = nadir_rotation();
        Self { rotation: r, translation: -(r * center) }
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

pub fn nadir_rotation() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
}

/// Axis-aligned rectangle in world XY (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn centered(width: f64, height: f64) -> Self {
        Self { min: [-width / 2.0, -height / 2.0], max: [width / 2.0, height / 2.0] }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { min: [self.min[0] + dx, self.min[1] + dy], max: [self.max[0] + dx, self.max[1] + dy] }
    }
}

/// Horizontal plane onto which all views are registered, together with the
/// raster that samples it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalPlane {
    height_m: f64,
    extent: Rect,
    resolution: [usize; 2],
}

impl FocalPlane {
    pub fn new(height_m: f64, extent: Rect, resolution: [usize; 2]) -> Result<Self> {
        if !(extent.area() > 0.0) || !height_m.is_finite() {
            return Err(Error::InvalidPlane(format!("extent {extent:?} has no area")));
        }
        if resolution[0] == 0 || resolution[1] == 0 {
            return Err(Error::InvalidPlane(format!("resolution {resolution:?} must be positive")));
        }
        Ok(Self { height_m, extent, resolution })
    }

    /// Plane at `height_m` whose extent is the footprint of the reference
    /// view and whose raster matches the reference camera.
    pub fn for_reference(camera: &CameraModel, pose: &Pose, height_m: f64) -> Result<Self> {
        let probe = Self { height_m, extent: Rect::centered(1.0, 1.0), resolution: camera.resolution };
        let (w, h) = (camera.width() as f64, camera.height() as f64);
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for corner in [[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]] {
            let g = pixel_to_ground(corner, camera, pose, &probe)?;
            min[0] = min[0].min(g.x);
            min[1] = min[1].min(g.y);
            max[0] = max[0].max(g.x);
            max[1] = max[1].max(g.y);
        }
        let pad = 1e-9 * (1.0 + max[0].abs().max(max[1].abs()).max(min[0].abs()).max(min[1].abs()));
        Self::new(height_m, Rect::new([min[0] - pad, min[1] - pad], [max[0] + pad, max[1] + pad]), camera.resolution)
    }

    /// Plane sampled on the reference raster whose extent is the intersection
    /// of every view's footprint bounds, so each valid pixel is seen by all
    /// views.
    pub fn common_footprint(views: &[View], reference: &View, height_m: f64) -> Result<Self> {
        let mut plane = Self::for_reference(&reference.camera, &reference.pose, height_m)?;
        let mut ext = plane.extent;
        for v in views {
            let e = Self::for_reference(&v.camera, &v.pose, height_m)?.extent;
            ext = Rect::new(
                [ext.min[0].max(e.min[0]), ext.min[1].max(e.min[1])],
                [ext.max[0].min(e.max[0]), ext.max[1].min(e.max[1])],
            );
        }
        if !(ext.max[0] > ext.min[0] && ext.max[1] > ext.min[1]) {
            return Err(Error::InvalidPlane("views share no common footprint".into()));
        }
        plane.extent = ext;
        Ok(plane)
    }

    pub fn with_extent(mut self, extent: Rect) -> Result<Self> {
        if !(extent.area() > 0.0) {
            return Err(Error::InvalidPlane(format!("extent {extent:?} has no area")));
        }
        self.extent = extent;
        Ok(self)
    }

    #[inline]
    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    #[inline]
    pub fn extent(&self) -> &Rect {
        &self.extent
    }

    #[inline]
    pub fn resolution(&self) -> [usize; 2] {
        self.resolution
    }
}

/// One camera of a rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub camera: CameraModel,
    pub pose: Pose,
}

impl View {
    pub fn new(camera: CameraModel, pose: Pose) -> Self {
        Self { camera, pose }
    }
}

/// Rigid 1D array of parallel, downward-looking cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRig {
    cameras: Vec<View>,
    baseline_m: f64,
    altitude_m: f64,
}

impl ArrayRig {
    pub fn new(cameras: Vec<View>, baseline_m: f64) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(Error::InvalidRig(format!("need at least 2 cameras, got {}", cameras.len())));
        }
        if !(baseline_m > 0.0) {
            return Err(Error::InvalidRig(format!("baseline {baseline_m} must be positive")));
        }
        let axis = cameras[0].pose.optical_axis();
        if !(axis.z < 0.0) {
            return Err(Error::InvalidRig("optical axes must point downward".into()));
        }
        for (k, v) in cameras.iter().enumerate() {
            let err = (v.pose.optical_axis() - axis).abs().max();
            if !(err <= ORTHO_TOL) {
                return Err(Error::InvalidRig(format!("camera {k} optical axis not parallel to camera 0")));
            }
        }
        let altitude_m = cameras[cameras.len() / 2].pose.center().z;
        Ok(Self { cameras, baseline_m, altitude_m })
    }

    /// Equidistant nadir cameras along world X, the center camera at
    /// `(0, 0, altitude_m)`.
    pub fn linear(count: usize, baseline_m: f64, altitude_m: f64, camera: CameraModel) -> Result<Self> {
        let center = count / 2;
        let cameras = (0..count)
            .map(|k| {
                let x = (k as f64 - center as f64) * baseline_m;
                View::new(camera, Pose::nadir(Vector3::new(x, 0.0, altitude_m)))
            })
            .collect();
        Self::new(cameras, baseline_m)
    }

    #[inline]
    pub fn cameras(&self) -> &[View] {
        &self.cameras
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.cameras.len()
    }

    #[inline]
    pub fn baseline_m(&self) -> f64 {
        self.baseline_m
    }

    #[inline]
    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }

    /// Synthetic aperture: physical length of the array.
    pub fn aperture_m(&self) -> f64 {
        (self.count() - 1) as f64 * self.baseline_m
    }

    #[inline]
    pub fn center_index(&self) -> usize {
        self.count() / 2
    }

    pub fn reference(&self) -> &View {
        &self.cameras[self.center_index()]
    }
}

/// Intersects the view ray through `pixel` with the focal plane.
pub fn pixel_to_ground(pixel: [f64; 2], camera: &CameraModel, pose: &Pose, plane: &FocalPlane) -> Result<Vector3<f64>> {
    if !camera.contains_inclusive(pixel) {
        return Err(Error::PixelOutOfBounds(pixel[0], pixel[1]));
    }
    let center = pose.center();
    let dist = plane.height_m - center.z;
    if dist.abs() < 1e-12 {
        return Err(Error::DegenerateGeometry("camera lies on the focal plane".into()));
    }
    let dir = pose.rotation.transpose() * camera.inverse_intrinsic_matrix() * Vector3::new(pixel[0], pixel[1], 1.0);
    if dir.z.abs() <= 1e-15 * dir.norm() {
        return Err(Error::RayParallelToPlane);
    }
    let t = dist / dir.z;
    if t <= 0.0 {
        return Err(Error::DegenerateGeometry("focal plane lies behind the camera".into()));
    }
    let mut p = center + dir * t;
    p.z = plane.height_m;
    Ok(p)
}

/// Pinhole projection with the point's depth in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    pub depth: f64,
}

pub fn ground_to_pixel(point: &Vector3<f64>, camera: &CameraModel, pose: &Pose) -> Result<Projection> {
    let pc = pose.world_to_camera(point);
    if !(pc.z > 0.0) {
        return Err(Error::PointBehindCamera(pc.z));
    }
    let f = camera.focal_length_px;
    let [cx, cy] = camera.principal_point;
    Ok(Projection { pixel: [f * pc.x / pc.z + cx, f * pc.y / pc.z + cy], depth: pc.z })
}

/// Linear map between homogeneous pixel coordinates of a raster and world
/// ray directions through a common center. Used for camera rasters and for
/// the focal-plane grid rendered from a reference perspective.
#[derive(Debug, Clone, Copy)]
pub struct PixelRays {
    center: Vector3<f64>,
    to_dir: Matrix3<f64>,
    from_dir: Matrix3<f64>,
    width: usize,
    height: usize,
}

impl PixelRays {
    pub fn for_view(view: &View) -> Self {
        let r = view.pose.rotation;
        Self {
            center: view.pose.center(),
            to_dir: r.transpose() * view.camera.inverse_intrinsic_matrix(),
            from_dir: view.camera.intrinsic_matrix() * r,
            width: view.camera.width(),
            height: view.camera.height(),
        }
    }

    /// Rays of the focal-plane raster seen from `reference`: grid pixel
    /// centers are scaled onto the reference camera raster.
    pub fn for_grid(reference: &View, plane: &FocalPlane) -> Self {
        let base = Self::for_view(reference);
        let sx = reference.camera.width() as f64 / plane.resolution[0] as f64;
        let sy = reference.camera.height() as f64 / plane.resolution[1] as f64;
        let scale = Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0);
        let unscale = Matrix3::new(1.0 / sx, 0.0, 0.0, 0.0, 1.0 / sy, 0.0, 0.0, 0.0, 1.0);
        Self {
            to_dir: base.to_dir * scale,
            from_dir: unscale * base.from_dir,
            width: plane.resolution[0],
            height: plane.resolution[1],
            ..base
        }
    }

    #[inline]
    pub fn center(&self) -> Vector3<f64> {
        self.center
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
    pub fn to_dir(&self) -> &Matrix3<f64> {
        &self.to_dir
    }

    #[inline]
    pub fn direction(&self, u: f64, v: f64) -> Vector3<f64> {
        self.to_dir * Vector3::new(u, v, 1.0)
    }

    /// Pixel coordinates and positive depth of a world point, if it is in
    /// front of the center.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<Projection> {
        let q = self.from_dir * (p - self.center);
        if q.z > 0.0 {
            Some(Projection { pixel: [q.x / q.z, q.y / q.z], depth: q.z })
        } else {
            None
        }
    }

    /// Homography from this raster to `target` induced by the plane `Z = height`.
    pub fn plane_homography(&self, height: f64, target: &View) -> PlaneHomography {
        let ez = RowVector3::new(0.0, 0.0, 1.0);
        let dist = height - self.center.z;
        // X * dz = (C ezᵀ + dist I) d
        let lift = self.center * ez + Matrix3::identity() * dist;
        let r = target.pose.rotation;
        let cam = (r * lift + target.pose.translation * ez) * self.to_dir;
        PlaneHomography { to_pixel: target.camera.intrinsic_matrix() * cam, dz: ez * self.to_dir, dist }
    }

    /// World point where the ray through `(u, v)` meets the plane `Z = height`.
    #[inline]
    pub fn plane_point(&self, u: f64, v: f64, height: f64) -> Option<Vector3<f64>> {
        let d = self.direction(u, v);
        let t = (height - self.center.z) / d.z;
        if t > 0.0 && t.is_finite() {
            let mut p = self.center + d * t;
            p.z = height;
            Some(p)
        } else {
            None
        }
    }
}

/// Plane-induced pixel transfer between two views.
#[derive(Debug, Clone, Copy)]
pub struct PlaneHomography {
    to_pixel: Matrix3<f64>,
    dz: RowVector3<f64>,
    dist: f64,
}

impl PlaneHomography {
    /// Target pixel for source pixel `(u, v)`, or `None` when the plane
    /// point lies behind either camera.
    #[inline]
    pub fn map(&self, u: f64, v: f64) -> Option<[f64; 2]> {
        let p = Vector3::new(u, v, 1.0);
        let dz = self.dz.dot(&p.transpose());
        if !(self.dist / dz > 0.0) {
            return None;
        }
        let q = self.to_pixel * p;
        if !(q.z / dz > 0.0) {
            return None;
        }
        Some([q.x / q.z, q.y / q.z])
    }
}

/// Removes radial distortion: every output pixel samples the distorted
/// source at its forward-distorted position. Out-of-raster samples clamp to
/// the edge. Zero coefficients return the input unchanged.
pub fn undistort(image: &RasterImage, camera: &CameraModel) -> Result<RasterImage> {
    image.check_same_size(camera.width(), camera.height())?;
    if !camera.has_distortion() {
        return Ok(image.clone());
    }
    Ok(remap(image, |p| camera.distort_point(p)))
}

/// Applies radial distortion to an ideal pinhole image. Inverse of
/// [`undistort`] up to interpolation.
pub fn distort(image: &RasterImage, camera: &CameraModel) -> Result<RasterImage> {
    image.check_same_size(camera.width(), camera.height())?;
    if !camera.has_distortion() {
        return Ok(image.clone());
    }
    Ok(remap(image, |p| camera.undistort_point(p)))
}

fn remap(image: &RasterImage, source: impl Fn([f64; 2]) -> [f64; 2] + Sync) -> RasterImage {
    let w = image.width();
    let mut out = RasterImage::new(w, image.height());
    out.pixels_mut().par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let s = source([x as f64 + 0.5, y as f64 + 0.5]);
            let c = image.sample(s[0], s[1]);
            *px = [c[0] as f32, c[1] as f32, c[2] as f32];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_camera() -> CameraModel {
        CameraModel::from_fov(41.10, 1024, 1024).unwrap()
    }

    fn ground() -> FocalPlane {
        FocalPlane::new(0.0, Rect::centered(100.0, 100.0), [1024, 1024]).unwrap()
    }

    #[test]
    fn focal_from_paper_fov() {
        let f = paper_camera().focal_length_px();
        // 512 / tan(20.55°), evaluated by hand
        assert!((f - 1365.77).abs() < 0.01, "{f}");
        assert!((focal_from_fov(41.10, [1024, 1024]) - f).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_fov_is_rejected() {
        let cam = paper_camera();
        assert!(CameraModel::with_fov(cam.focal_length_px(), [512.0, 512.0], [1024, 1024], 45.0, [0.0; 2]).is_err());
        assert!(CameraModel::with_fov(cam.focal_length_px(), [512.0, 512.0], [1024, 1024], 41.10, [0.0; 2]).is_ok());
        assert!(CameraModel::new(-1.0, [0.0, 0.0], [10, 10], [0.0; 2]).is_err());
        assert!(CameraModel::new(10.0, [0.0, 0.0], [0, 10], [0.0; 2]).is_err());
    }

    #[test]
    fn pose_rejects_non_orthonormal() {
        let mut r = nadir_rotation();
        r[(0, 0)] = 1.01;
        assert!(Pose::new(r, Vector3::zeros()).is_err());
        assert!(Pose::new(-Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn principal_point_maps_to_nadir() {
        let cam = paper_camera();
        let pose = Pose::nadir(Vector3::new(3.0, -2.0, 35.0));
        let g = pixel_to_ground([512.0, 512.0], &cam, &pose, &ground()).unwrap();
        assert!((g - Vector3::new(3.0, -2.0, 0.0)).norm() < 1e-12);
        let back = ground_to_pixel(&g, &cam, &pose).unwrap();
        assert!((back.pixel[0] - 512.0).abs() < 1e-9 && (back.pixel[1] - 512.0).abs() < 1e-9);
        assert!((back.depth - 35.0).abs() < 1e-12);
    }

    #[test]
    fn corner_pixel_offset_matches_half_fov() {
        let cam = paper_camera();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 35.0));
        let g = pixel_to_ground([0.0, 0.0], &cam, &pose, &ground()).unwrap();
        let expected = 35.0 * 20.55f64.to_radians().tan();
        assert!((expected - 13.12).abs() < 0.01);
        // image −X is world −X, image −Y is world +Y for a nadir camera
        assert!((g.x + expected).abs() < 1e-9, "{g}");
        assert!((g.y - expected).abs() < 1e-9, "{g}");
    }

    #[test]
    fn ground_offset_projects_to_expected_pixel() {
        let cam = paper_camera();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 35.0));
        let p = ground_to_pixel(&Vector3::new(13.12, 0.0, 0.0), &cam, &pose).unwrap();
        // f·13.12/35 with f = 512/tan(20.55°) ≈ 1365.77
        assert!((p.pixel[0] - 512.0 - 511.97).abs() < 0.01, "{:?}", p.pixel);
        assert!((p.pixel[1] - 512.0).abs() < 1e-9);
    }

    #[test]
    fn plane_at_camera_height_is_degenerate() {
        let cam = paper_camera();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 35.0));
        let plane = FocalPlane::new(35.0, Rect::centered(10.0, 10.0), [8, 8]).unwrap();
        assert!(matches!(pixel_to_ground([10.0, 20.0], &cam, &pose, &plane), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn horizontal_camera_ray_is_parallel() {
        let cam = paper_camera();
        // looking along world +X; the principal ray is horizontal
        let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        let pose = Pose::from_center(r, Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert!(matches!(pixel_to_ground([512.0, 512.0], &cam, &pose, &ground()), Err(Error::RayParallelToPlane)));
    }

    #[test]
    fn point_behind_camera_is_rejected() {
        let cam = paper_camera();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 35.0));
        assert!(matches!(ground_to_pixel(&Vector3::new(0.0, 0.0, 40.0), &cam, &pose), Err(Error::PointBehindCamera(_))));
    }

    #[test]
    fn out_of_raster_pixel_is_rejected() {
        let cam = paper_camera();
        let pose = Pose::nadir(Vector3::new(0.0, 0.0, 35.0));
        assert!(pixel_to_ground([-1.0, 3.0], &cam, &pose, &ground()).is_err());
    }

    #[test]
    fn linear_rig_geometry() {
        let rig = ArrayRig::linear(10, 1.0, 35.0, paper_camera()).unwrap();
        assert_eq!(rig.count(), 10);
        assert_eq!(rig.center_index(), 5);
        assert!((rig.aperture_m() - 9.0).abs() < 1e-12);
        assert_eq!(rig.reference().pose.center(), Vector3::new(0.0, 0.0, 35.0));
        assert!(ArrayRig::linear(1, 1.0, 35.0, paper_camera()).is_err());
    }

    #[test]
    fn common_footprint_of_linear_rig() {
        let rig = ArrayRig::linear(10, 1.0, 35.0, paper_camera()).unwrap();
        let plane = FocalPlane::common_footprint(rig.cameras(), rig.reference(), 0.0).unwrap();
        let half = 35.0 * 20.55f64.to_radians().tan();
        let e = plane.extent();
        // cameras sit at x = −5…4, the reference at 0
        assert!((e.min[0] - (4.0 - half)).abs() < 1e-6, "{e:?}");
        assert!((e.max[0] - (half - 5.0)).abs() < 1e-6, "{e:?}");
        assert!((e.min[1] + half).abs() < 1e-6 && (e.max[1] - half).abs() < 1e-6);
        assert_eq!(plane.resolution(), [1024, 1024]);

        let far = View::new(paper_camera(), Pose::nadir(Vector3::new(100.0, 0.0, 35.0)));
        assert!(FocalPlane::common_footprint(&[far], rig.reference(), 0.0).is_err());
    }

    #[test]
    fn homography_agrees_with_ray_plane_route() {
        let cam = paper_camera();
        let rig = ArrayRig::linear(4, 1.5, 30.0, cam).unwrap();
        let rays = PixelRays::for_view(rig.reference());
        let target = &rig.cameras()[0];
        let h = rays.plane_homography(2.0, target);
        let plane = FocalPlane::new(2.0, Rect::centered(1.0, 1.0), [1024, 1024]).unwrap();
        for &(u, v) in &[(10.5, 20.5), (512.0, 512.0), (1000.0, 3.0)] {
            let g = pixel_to_ground([u, v], &rig.reference().camera, &rig.reference().pose, &plane).unwrap();
            let p = ground_to_pixel(&g, &target.camera, &target.pose).unwrap();
            let q = h.map(u, v).unwrap();
            assert!((p.pixel[0] - q[0]).abs() < 1e-8 && (p.pixel[1] - q[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_distortion_undistort_is_identity() {
        let cam = CameraModel::from_fov(60.0, 16, 12).unwrap();
        let img = RasterImage::from_fn(16, 12, |x, y| [x as f32 / 16.0, y as f32 / 12.0, 0.3]);
        assert_eq!(undistort(&img, &cam).unwrap(), img);
    }

    #[test]
    fn distortion_points_invert() {
        let cam = CameraModel::from_fov(41.1, 1024, 1024).unwrap().with_distortion(0.1, 0.0);
        for &p in &[[0.0, 0.0], [100.0, 900.0], [512.0, 512.0], [1024.0, 1024.0]] {
            let d = cam.distort_point(p);
            let u = cam.undistort_point(d);
            assert!((u[0] - p[0]).abs() < 1e-6 && (u[1] - p[1]).abs() < 1e-6, "{p:?} -> {u:?}");
        }
    }

    fn random_view(seed: [f64; 6]) -> (CameraModel, Pose, FocalPlane) {
        let [fov, res, ax, ay, yaw, alt] = seed;
        let res = 64 + (res * 1000.0) as usize;
        let cam = CameraModel::from_fov(10.0 + fov * 100.0, res, res + 17).unwrap();
        // tilt up to ~15° off nadir around a random axis, then yaw
        let tilt = nalgebra::Rotation3::from_euler_angles(ax * 0.5 - 0.25, ay * 0.5 - 0.25, yaw * std::f64::consts::TAU);
        let r = nadir_rotation() * tilt.matrix().transpose();
        let center = Vector3::new(ax * 100.0 - 50.0, ay * 100.0 - 50.0, 5.0 + alt * 200.0);
        let pose = Pose::from_center(r, center).unwrap();
        let plane = FocalPlane::new(alt * 4.0 - 2.0, Rect::centered(1.0, 1.0), [8, 8]).unwrap();
        (cam, pose, plane)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn pixel_ground_pixel_round_trip(
            view in proptest::array::uniform6(0.0f64..1.0),
            pu in 0.0f64..1.0,
            pv in 0.0f64..1.0,
        ) {
            let (cam, pose, plane) = random_view(view);
            let px = [pu * cam.width() as f64, pv * cam.height() as f64];
            let g = pixel_to_ground(px, &cam, &pose, &plane).unwrap();
            prop_assert!((g.z - plane.height_m()).abs() < 1e-9);
            let back = ground_to_pixel(&g, &cam, &pose).unwrap();
            prop_assert!((back.pixel[0] - px[0]).abs() < 1e-6 && (back.pixel[1] - px[1]).abs() < 1e-6);
        }

        #[test]
        fn ground_point_is_translation_equivariant(
            view in proptest::array::uniform6(0.0f64..1.0),
            dx in -500.0f64..500.0,
            dy in -500.0f64..500.0,
        ) {
            let (cam, pose, plane) = random_view(view);
            let shifted_pose = Pose::from_center(*pose.rotation(), pose.center() + Vector3::new(dx, dy, 0.0)).unwrap();
            let shifted_plane = plane.with_extent(plane.extent().translated(dx, dy)).unwrap();
            let px = [cam.width() as f64 * 0.3, cam.height() as f64 * 0.8];
            let a = pixel_to_ground(px, &cam, &pose, &plane).unwrap();
            let b = pixel_to_ground(px, &cam, &shifted_pose, &shifted_plane).unwrap();
            prop_assert!((b.x - a.x - dx).abs() < 1e-9 * (1.0 + dx.abs() + a.x.abs()));
            prop_assert!((b.y - a.y - dy).abs() < 1e-9 * (1.0 + dy.abs() + a.y.abs()));
        }
    }
}
