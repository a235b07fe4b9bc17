//! On-disk datasets: rig files, manifests, per-camera frame sequences and
//! ground truth.
//!
//! ```text
//! <root>/manifest.json
//! <root>/rig.json
//! <root>/cam<k>/frame_<nnnn>.png
//! <root>/truth/frame_<nnnn>.png          focal-plane target labels
//! <root>/truth/cam<k>/frame_<nnnn>.png   per-camera occlusion-free labels
//! <root>/truth/centroids.csv
//! ```
//!
//! A directory holding only `rig.json` and `cam<k>/` image sequences is a
//! valid real-data dataset: the focal plane defaults to the ground under
//! the reference view.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayRig, CameraModel, FocalPlane, Pose, View};
use crate::integrator::FrameSet;
use crate::raster::{LabelRaster, RasterImage};
use crate::simulator::{self, GroundTruth, SceneSpec, TargetCentroid};

pub const RIG_FORMAT: &str = "aos-rig/1";
pub const MANIFEST_FORMAT: &str = "aos-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RIG_FILE: &str = "rig.json";

/// One camera in a rig file. `rotation` is row-major and, with
/// `translation`, maps world points into the camera frame
/// (`x_cam = R·x_world + t`; camera X right, Y down, Z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub name: String,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub focal_px: f64,
    pub principal_point: [f64; 2],
    /// `[width, height]` in pixels.
    pub resolution: [usize; 2],
    /// Radial coefficients `[k1, k2]`.
    #[serde(default)]
    pub distortion: [f64; 2],
    /// Field of view across the shorter side; derived from `focal_px` when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_deg: Option<f64>,
}

impl CameraEntry {
    pub fn from_view(name: String, view: &View) -> Self {
        let r = view.pose.rotation();
        let t = view.pose.translation();
        Self {
            name,
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [t.x, t.y, t.z],
            focal_px: view.camera.focal_length_px(),
            principal_point: view.camera.principal_point(),
            resolution: view.camera.resolution(),
            distortion: view.camera.radial_distortion(),
            fov_deg: Some(view.camera.fov_deg()),
        }
    }

    pub fn to_view(&self) -> Result<View> {
        let camera = match self.fov_deg {
            Some(fov) => CameraModel::with_fov(self.focal_px, self.principal_point, self.resolution, fov, self.distortion)?,
            None => CameraModel::new(self.focal_px, self.principal_point, self.resolution, self.distortion)?,
        };
        let pose = Pose::new(Matrix3::from_row_slice(&self.rotation), Vector3::from(self.translation))?;
        Ok(View::new(camera, pose))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub format: String,
    /// Index of the camera whose perspective defines the integral raster.
    pub reference: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_m: Option<f64>,
    pub cameras: Vec<CameraEntry>,
}

impl RigFile {
    pub fn from_views(views: &[View], reference: usize, baseline_m: Option<f64>) -> Self {
        Self {
            format: RIG_FORMAT.into(),
            reference,
            baseline_m,
            cameras: views.iter().enumerate().map(|(k, v)| CameraEntry::from_view(format!("cam{k}"), v)).collect(),
        }
    }

    pub fn from_rig(rig: &ArrayRig) -> Self {
        Self::from_views(rig.cameras(), rig.center_index(), Some(rig.baseline_m()))
    }

    pub fn views(&self) -> Result<Vec<View>> {
        if self.cameras.is_empty() {
            return Err(Error::InvalidRig("rig file lists no cameras".into()));
        }
        if self.reference >= self.cameras.len() {
            return Err(Error::InvalidRig(format!("reference {} out of range", self.reference)));
        }
        self.cameras.iter().map(CameraEntry::to_view).collect()
    }

    /// Rebuilds an array rig; without a recorded baseline the spacing of the
    /// first two cameras is used.
    pub fn to_array_rig(&self) -> Result<ArrayRig> {
        let views = self.views()?;
        let baseline = match self.baseline_m {
            Some(b) => b,
            None if views.len() >= 2 => (views[1].pose.center() - views[0].pose.center()).norm(),
            None => 0.0,
        };
        ArrayRig::new(views, baseline)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rig: Self = read_json(path.as_ref())?;
        if rig.format != RIG_FORMAT {
            return Err(Error::format(path.as_ref(), format!("unsupported rig format {:?}", rig.format)));
        }
        Ok(rig)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    /// Scene description for simulated datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
    pub rig: RigFile,
    pub fps: f64,
    pub frames: usize,
    pub focal_plane: FocalPlane,
    /// Synthetic aperture: distance between the outermost camera centers (m).
    pub aperture_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized_density: Option<f64>,
    pub num_targets: usize,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = read_json(path.as_ref())?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::format(path.as_ref(), format!("unsupported manifest format {:?}", m.format)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

fn aperture(views: &[View]) -> f64 {
    let mut max: f64 = 0.0;
    for a in views {
        for b in views {
            max = max.max((a.pose.center() - b.pose.center()).norm());
        }
    }
    max
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn frame_file_name(frame: usize) -> String {
    format!("frame_{frame:04}.png")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidRow {
    pub frame: usize,
    pub target_id: usize,
    pub world_x: f64,
    pub world_y: f64,
    pub px_x: f64,
    pub px_y: f64,
}

/// A dataset directory, simulated or user supplied.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    views: Vec<View>,
    centroids: Vec<CentroidRow>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(Error::io(&root, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found")));
        }
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() { Manifest::load(&manifest_path)? } else { Self::infer_manifest(&root)? };
        let views = manifest.rig.views()?;
        let centroids_path = root.join("truth").join("centroids.csv");
        let centroids = if centroids_path.exists() { read_centroids(&centroids_path)? } else { Vec::new() };
        let ds = Self { root, manifest, views, centroids };
        for k in 0..ds.views.len() {
            let dir = ds.camera_dir(k);
            if !dir.is_dir() {
                return Err(Error::format(dir, "missing camera directory"));
            }
        }
        Ok(ds)
    }

    fn infer_manifest(root: &Path) -> Result<Manifest> {
        let rig = RigFile::load(root.join(RIG_FILE))?;
        let views = rig.views()?;
        let cam0 = root.join("cam0");
        let entries = fs::read_dir(&cam0).map_err(|e| Error::io(&cam0, e))?;
        let mut frames = 0;
        for e in entries {
            let e = e.map_err(|e| Error::io(&cam0, e))?;
            let name = e.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("frame_") && name.ends_with(".png") {
                frames += 1;
            }
        }
        let r = &views[rig.reference];
        let focal_plane =
            FocalPlane::common_footprint(&views, r, 0.0).or_else(|_| FocalPlane::for_reference(&r.camera, &r.pose, 0.0))?;
        Ok(Manifest {
            format: MANIFEST_FORMAT.into(),
            scene: None,
            focal_plane,
            aperture_m: aperture(&views),
            rig,
            fps: 30.0,
            frames,
            realized_density: None,
            num_targets: 0,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn reference(&self) -> usize {
        self.manifest.rig.reference
    }

    pub fn focal_plane(&self) -> &FocalPlane {
        &self.manifest.focal_plane
    }

    pub fn frames(&self) -> usize {
        self.manifest.frames
    }

    pub fn camera_dir(&self, k: usize) -> PathBuf {
        self.root.join(format!("cam{k}"))
    }

    pub fn frame_path(&self, camera: usize, frame: usize) -> PathBuf {
        self.camera_dir(camera).join(frame_file_name(frame))
    }

    pub fn truth_path(&self, frame: usize) -> PathBuf {
        self.root.join("truth").join(frame_file_name(frame))
    }

    pub fn camera_truth_path(&self, camera: usize, frame: usize) -> PathBuf {
        self.root.join("truth").join(format!("cam{camera}")).join(frame_file_name(frame))
    }

    pub fn has_truth(&self, frame: usize) -> bool {
        self.truth_path(frame).exists()
    }

    pub fn load_frameset(&self, frame: usize) -> Result<FrameSet> {
        let images =
            (0..self.views.len()).map(|k| RasterImage::load_png(self.frame_path(k, frame))).collect::<Result<Vec<_>>>()?;
        for (k, (img, v)) in images.iter().zip(&self.views).enumerate() {
            if img.width() != v.camera.width() || img.height() != v.camera.height() {
                return Err(Error::format(
                    self.frame_path(k, frame),
                    format!("image is {}x{}, rig expects {:?}", img.width(), img.height(), v.camera.resolution()),
                ));
            }
        }
        FrameSet::new(self.views.clone(), images, self.reference(), frame)
    }

    /// Ground truth of one frame, `None` when the dataset carries none.
    pub fn load_truth(&self, frame: usize) -> Result<Option<GroundTruth>> {
        if !self.has_truth(frame) {
            return Ok(None);
        }
        let n = self.manifest.num_targets;
        let labels = LabelRaster::load_png(self.truth_path(frame), n)?;
        let mut camera_labels = Vec::new();
        for k in 0..self.views.len() {
            let p = self.camera_truth_path(k, frame);
            if !p.exists() {
                camera_labels.clear();
                break;
            }
            camera_labels.push(LabelRaster::load_png(p, n)?);
        }
        let centroids = self
            .centroids
            .iter()
            .filter(|r| r.frame == frame)
            .map(|r| TargetCentroid { target_id: r.target_id, world: [r.world_x, r.world_y], pixel: [r.px_x, r.px_y] })
            .collect();
        Ok(Some(GroundTruth {
            frame_index: frame,
            time_s: frame as f64 / self.manifest.fps,
            labels,
            centroids,
            camera_labels,
            camera_visibility: Vec::new(),
        }))
    }

    pub fn centroids(&self) -> &[CentroidRow] {
        &self.centroids
    }
}

pub fn read_centroids(path: &Path) -> Result<Vec<CentroidRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv { path: path.into(), source })?;
    reader.deserialize().map(|r| r.map_err(|source| Error::Csv { path: path.into(), source })).collect()
}

fn write_centroids(path: &Path, rows: &[CentroidRow]) -> Result<()> {
    let err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    if rows.is_empty() {
        w.write_record(["frame", "target_id", "world_x", "world_y", "px_x", "px_y"]).map_err(err)?;
    }
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one frame's camera images and labels.
pub fn write_frame(root: &Path, frames: &FrameSet, truth: &GroundTruth) -> Result<()> {
    let n = frames.frame_index();
    for (k, img) in frames.images().iter().enumerate() {
        img.save_png(root.join(format!("cam{k}")).join(frame_file_name(n)))?;
    }
    truth.labels.save_png(root.join("truth").join(frame_file_name(n)))?;
    for (k, l) in truth.camera_labels.iter().enumerate() {
        l.save_png(root.join("truth").join(format!("cam{k}")).join(frame_file_name(n)))?;
    }
    Ok(())
}

/// Simulates `frames` synchronized frames at `fps` and writes the dataset
/// to `out`. The focal plane is the ground under the reference view.
pub fn simulate_flight(spec: &SceneSpec, rig: &ArrayRig, frames: usize, fps: f64, out: impl AsRef<Path>) -> Result<Manifest> {
    if !(fps > 0.0) {
        return Err(Error::InvalidScene(format!("fps {fps} must be positive")));
    }
    let out = out.as_ref();
    let scene = simulator::generate_scene(spec)?;
    let plane = simulator::ground_plane(rig)?;
    create_dir(&out.join("truth"))?;
    for k in 0..rig.count() {
        create_dir(&out.join(format!("cam{k}")))?;
        create_dir(&out.join("truth").join(format!("cam{k}")))?;
    }
    let rig_file = RigFile::from_rig(rig);
    rig_file.save(out.join(RIG_FILE))?;
    let mut centroids = Vec::new();
    for n in 0..frames {
        let (set, truth) = simulator::render_frame(&scene, rig, &plane, n, n as f64 / fps)?;
        write_frame(out, &set, &truth)?;
        centroids.extend(truth.centroids.iter().map(|c| CentroidRow {
            frame: n,
            target_id: c.target_id,
            world_x: c.world[0],
            world_y: c.world[1],
            px_x: c.pixel[0],
            px_y: c.pixel[1],
        }));
    }
    write_centroids(&out.join("truth").join("centroids.csv"), &centroids)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        scene: Some(spec.clone()),
        rig: rig_file,
        fps,
        frames,
        focal_plane: plane,
        aperture_m: rig.aperture_m(),
        realized_density: Some(scene.realized_density),
        num_targets: spec.targets.len(),
    };
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_scene, ground_plane, paper_rig, render_frame};

    #[test]
    fn rig_round_trips_exactly() {
        let rig = paper_rig(35.0, 1024).unwrap().clone();
        let file = RigFile::from_rig(&rig);
        let text = serde_json::to_string(&file).unwrap();
        let back: RigFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_array_rig().unwrap(), rig);
    }

    #[test]
    fn rig_without_fov_or_baseline() {
        let rig = paper_rig(35.0, 64).unwrap();
        let mut file = RigFile::from_rig(&rig);
        file.baseline_m = None;
        for c in &mut file.cameras {
            c.fov_deg = None;
        }
        let back = file.to_array_rig().unwrap();
        assert!((back.baseline_m() - 1.0).abs() < 1e-12);
        assert!((back.cameras()[0].camera.fov_deg() - 41.10).abs() < 1e-9);
    }

    #[test]
    fn bad_rig_is_rejected() {
        let rig = paper_rig(35.0, 64).unwrap();
        let mut file = RigFile::from_rig(&rig);
        file.cameras[3].rotation[0] = 2.0;
        assert!(file.views().is_err());
        let mut file = RigFile::from_rig(&rig);
        file.reference = 10;
        assert!(file.views().is_err());
    }

    #[test]
    fn single_frame_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec::two_walkers(11, 0.3);
        let rig = paper_rig(35.0, 96).unwrap();
        let manifest = simulate_flight(&spec, &rig, 1, 30.0, dir.path()).unwrap();
        assert_eq!(manifest.aperture_m, 9.0);
        assert_eq!(manifest.rig.cameras.len(), 10);

        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest(), &manifest);
        assert_eq!(ds.manifest().scene.as_ref().unwrap(), &spec);
        assert_eq!(ds.manifest().rig.to_array_rig().unwrap(), rig);
        assert_eq!(ds.frames(), 1);

        // the files hold the quantized renders of the same instant
        let scene = generate_scene(&spec).unwrap();
        let (set, truth) = render_frame(&scene, &rig, &ground_plane(&rig).unwrap(), 0, 0.0).unwrap();
        let loaded = ds.load_frameset(0).unwrap();
        for (a, b) in loaded.images().iter().zip(set.images()) {
            assert_eq!(a, &b.quantized());
        }
        let t = ds.load_truth(0).unwrap().unwrap();
        assert_eq!(t.labels, truth.labels);
        assert_eq!(t.camera_labels, truth.camera_labels);
        assert_eq!(t.centroids, truth.centroids);
        assert!(ds.load_truth(1).unwrap().is_none());
        assert!(ds.load_frameset(1).is_err());
    }

    #[test]
    fn rig_only_directory_is_a_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let rig = paper_rig(35.0, 32).unwrap();
        RigFile::from_rig(&rig).save(dir.path().join(RIG_FILE)).unwrap();
        for k in 0..10 {
            fs::create_dir_all(dir.path().join(format!("cam{k}"))).unwrap();
            for n in 0..2 {
                RasterImage::filled(32, 32, [0.5, 0.5, 0.5])
                    .save_png(dir.path().join(format!("cam{k}")).join(frame_file_name(n)))
                    .unwrap();
            }
        }
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.frames(), 2);
        assert_eq!(ds.manifest().aperture_m, 9.0);
        assert!(ds.load_truth(0).unwrap().is_none());
        assert_eq!(ds.load_frameset(1).unwrap().len(), 10);
    }

    #[test]
    fn missing_camera_directory_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let rig = paper_rig(35.0, 32).unwrap();
        RigFile::from_rig(&rig).save(dir.path().join(RIG_FILE)).unwrap();
        fs::create_dir_all(dir.path().join("cam0")).unwrap();
        let err = Dataset::open(dir.path()).unwrap_err().to_string();
        assert!(err.contains("cam1"), "{err}");
    }
}
