//! Python bindings. Images cross the boundary as flat RGB float lists,
//! masks and label rasters as `bytes` (one byte per pixel).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use aos_core::anomaly;
use aos_core::dataset::{self, RigFile};
use aos_core::geometry::{ArrayRig, FocalPlane};
use aos_core::integrator::{self, FrameSet, IntegralImage};
use aos_core::metrics;
use aos_core::raster::{LabelRaster, Mask as CoreMask, RasterImage};
use aos_core::simulator::{self, GroundTruth, SceneSpec};
use aos_core::tracker::{self, TrackerParams};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(module = "aos", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Image(RasterImage);

#[pymethods]
impl Image {
    /// `data` holds `width * height * 3` values in row-major RGB order.
    #[new]
    fn new(width: usize, height: usize, data: Vec<f32>) -> PyResult<Self> {
        if data.len() != width * height * 3 {
            return Err(err(format!("expected {} values, got {}", width * height * 3, data.len())));
        }
        let px = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        RasterImage::from_pixels(width, height, px).map(Self).map_err(err)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        Self(RasterImage::filled(width, height, color))
    }

    #[staticmethod]
    fn load_png(path: &str) -> PyResult<Self> {
        RasterImage::load_png(path).map(Self).map_err(err)
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        self.0.save_png(path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<[f32; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(err("pixel outside image"));
        }
        Ok(self.0.get(x, y))
    }

    fn to_list(&self) -> Vec<f32> {
        self.0.pixels().iter().flatten().copied().collect()
    }

    fn quantized(&self) -> Self {
        Self(self.0.quantized())
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(module = "aos", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Mask(CoreMask);

#[pymethods]
impl Mask {
    /// Nonzero bytes are set pixels.
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        CoreMask::from_vec(width, height, data.iter().map(|&b| b != 0).collect()).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load_png(path: &str) -> PyResult<Self> {
        CoreMask::load_png(path).map(Self).map_err(err)
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        self.0.save_png(path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let data: Vec<u8> = self.0.as_slice().iter().map(|&b| u8::from(b)).collect();
        PyBytes::new(py, &data)
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{}, {} set)", self.0.width(), self.0.height(), self.0.count())
    }
}

#[pyclass(module = "aos", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Labels(LabelRaster);

#[pymethods]
impl Labels {
    /// Byte `k > 0` marks target `k - 1`.
    #[new]
    fn new(width: usize, height: usize, num_labels: usize, data: &[u8]) -> PyResult<Self> {
        LabelRaster::from_vec(width, height, num_labels, data.to_vec()).map(Self).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.0.num_labels()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.as_slice())
    }
}

#[pyclass(module = "aos", frozen)]
struct Rig {
    rig: ArrayRig,
    plane: FocalPlane,
}

impl Rig {
    fn wrap(rig: ArrayRig) -> PyResult<Self> {
        let plane = simulator::ground_plane(&rig).map_err(err)?;
        Ok(Self { rig, plane })
    }
}

#[pymethods]
impl Rig {
    /// Ten nadir cameras, 1 m apart, 41.1° field of view.
    #[staticmethod]
    #[pyo3(signature = (altitude_m = 35.0, resolution = 1024))]
    fn paper(altitude_m: f64, resolution: usize) -> PyResult<Self> {
        Self::wrap(simulator::paper_rig(altitude_m, resolution).map_err(err)?)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::wrap(RigFile::load(path).and_then(|f| f.to_array_rig()).map_err(err)?)
    }

    #[getter]
    fn count(&self) -> usize {
        self.rig.count()
    }

    #[getter]
    fn aperture_m(&self) -> f64 {
        self.rig.aperture_m()
    }

    #[getter]
    fn reference_index(&self) -> usize {
        self.rig.center_index()
    }
}

#[pyclass(module = "aos", frozen)]
struct Scene(simulator::Scene);

#[pymethods]
impl Scene {
    /// Forest at occlusion density `density`, with two walking targets
    /// unless `targets` is false.
    #[new]
    #[pyo3(signature = (seed, density, targets = true, noise_sigma = 0.0))]
    fn new(seed: u64, density: f64, targets: bool, noise_sigma: f64) -> PyResult<Self> {
        let mut spec = if targets { SceneSpec::two_walkers(seed, density) } else { SceneSpec::forest(seed, density) };
        spec.noise_sigma = noise_sigma;
        simulator::generate_scene(&spec).map(Self).map_err(err)
    }

    #[getter]
    fn realized_density(&self) -> f64 {
        self.0.realized_density
    }

    #[getter]
    fn num_occluders(&self) -> usize {
        self.0.occluders.len()
    }

    #[getter]
    fn num_targets(&self) -> usize {
        self.0.spec.targets.len()
    }
}

/// One synchronized frame set with its ground truth.
#[pyclass(module = "aos", frozen)]
struct Frame {
    set: FrameSet,
    truth: GroundTruth,
}

#[pymethods]
impl Frame {
    #[getter]
    fn images(&self) -> Vec<Image> {
        self.set.images().iter().cloned().map(Image).collect()
    }

    /// Occlusion-free target labels on the integral raster.
    #[getter]
    fn labels(&self) -> Labels {
        Labels(self.truth.labels.clone())
    }

    #[getter]
    fn camera_labels(&self) -> Vec<Labels> {
        self.truth.camera_labels.iter().cloned().map(Labels).collect()
    }

    /// `(target_id, world_x, world_y, pixel_x, pixel_y)` per target.
    #[getter]
    fn centroids(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        self.truth.centroids.iter().map(|c| (c.target_id, c.world[0], c.world[1], c.pixel[0], c.pixel[1])).collect()
    }
}

#[pyclass(module = "aos", frozen)]
struct Integral(IntegralImage);

#[pymethods]
impl Integral {
    #[getter]
    fn image(&self) -> Image {
        Image(self.0.raster.clone())
    }

    #[getter]
    fn counts(&self) -> Vec<u16> {
        self.0.count_map.clone()
    }

    fn valid_mask(&self) -> Mask {
        Mask(self.0.valid_mask())
    }

    fn quantized(&self) -> Self {
        Self(IntegralImage { raster: self.0.raster.quantized(), ..self.0.clone() })
    }
}

#[pyclass(module = "aos", frozen)]
struct RxField(anomaly::RxField);

#[pymethods]
impl RxField {
    fn scores(&self) -> Vec<f64> {
        self.0.scores().to_vec()
    }

    /// Mask of valid pixels scoring above the `confidence` quantile, with
    /// the threshold used.
    fn threshold(&self, confidence: f64) -> PyResult<(Mask, f64)> {
        let m = anomaly::threshold_by_confidence(&self.0, confidence).map_err(err)?;
        Ok((Mask(m.mask), m.threshold_used))
    }

    /// `(confidence, mask, precision, targets_covered)` of the supervised
    /// confidence search; precision is `None` for an empty mask.
    fn optimize(&self, truth: &Labels) -> PyResult<(f64, Mask, Option<f64>, usize)> {
        let c = anomaly::optimize_threshold(&self.0, &truth.0).map_err(err)?;
        Ok((c.confidence, Mask(c.mask.mask), c.precision.percent(), c.targets_covered))
    }
}

#[pyfunction]
fn render_frame(scene: &Scene, rig: &Rig, frame_index: usize, time_s: f64) -> PyResult<Frame> {
    let (set, truth) = simulator::render_frame(&scene.0, &rig.rig, &rig.plane, frame_index, time_s).map_err(err)?;
    Ok(Frame { set, truth })
}

/// Integral of `frame` on the rig's ground plane.
#[pyfunction]
fn integrate(frame: &Frame, rig: &Rig) -> PyResult<Integral> {
    integrator::integrate(&frame.set, &rig.plane).map(Integral).map_err(err)
}

/// RX scores of `image`, statistics over `valid` pixels (all when omitted).
#[pyfunction]
#[pyo3(signature = (image, valid = None))]
fn rx_scores(image: &Image, valid: Option<&Mask>) -> PyResult<RxField> {
    let valid = valid.map(|m| &m.0);
    let stats = anomaly::background_stats(&image.0, valid).map_err(err)?;
    anomaly::rx_scores(&image.0, &stats, valid).map(RxField).map_err(err)
}

#[pyfunction]
fn pixel_precision(mask: &Mask, truth: &Labels) -> PyResult<Option<f64>> {
    metrics::pixel_precision(&mask.0, &truth.0).map(|p| p.percent()).map_err(err)
}

/// Raw-versus-integral precision row as a JSON string.
#[pyfunction]
fn evaluate_frame(frame: &Frame, integral: &Integral) -> PyResult<String> {
    let report = metrics::evaluate_set(&frame.set, &integral.0, &frame.truth).map_err(err)?;
    serde_json::to_string(&report).map_err(err)
}

/// Mean diagonal shrink factor of the raw versus integral color covariance.
#[pyfunction]
fn covariance_shrink(frame: &Frame, integral: &Integral) -> PyResult<f64> {
    metrics::covariance_report(&frame.set, &integral.0).map(|r| r.mean_diagonal_shrink()).map_err(err)
}

#[pyclass(module = "aos")]
struct Tracker(Option<tracker::Tracker>);

#[pymethods]
impl Tracker {
    #[new]
    #[pyo3(signature = (gate_px = 30.0, min_area = 4, confirm_hits = 3, max_misses = 5))]
    fn new(gate_px: f64, min_area: usize, confirm_hits: u32, max_misses: u32) -> Self {
        let params = TrackerParams { gate_px, min_area, confirm_hits, max_misses, ..TrackerParams::default() };
        Self(Some(tracker::Tracker::new(params)))
    }

    /// Advances one frame; returns the blobs as `(x, y, area)`.
    fn step(&mut self, mask: &Mask) -> PyResult<Vec<(f64, f64, usize)>> {
        let t = self.0.as_mut().ok_or_else(|| err("tracker already finished"))?;
        Ok(t.step_mask(&mask.0).iter().map(|b| (b.centroid[0], b.centroid[1], b.area)).collect())
    }

    /// Ends the sequence and returns the tracks CSV text.
    fn finish(&mut self) -> PyResult<String> {
        let t = self.0.take().ok_or_else(|| err("tracker already finished"))?;
        let mut buf = Vec::new();
        tracker::write_tracks_csv(&t.finish(), &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }
}

/// Simulates a two-walker flight into `out`; returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (out, seed = 0, density = 0.85, frames = 30, resolution = 1024, fps = 30.0))]
fn simulate_flight(out: &str, seed: u64, density: f64, frames: usize, resolution: usize, fps: f64) -> PyResult<String> {
    let rig = simulator::paper_rig(simulator::DEFAULT_ALTITUDE_M, resolution).map_err(err)?;
    let m = dataset::simulate_flight(&SceneSpec::two_walkers(seed, density), &rig, frames, fps, out).map_err(err)?;
    serde_json::to_string(&m).map_err(err)
}

#[pymodule]
fn aos(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Image>()?;
    m.add_class::<Mask>()?;
    m.add_class::<Labels>()?;
    m.add_class::<Rig>()?;
    m.add_class::<Scene>()?;
    m.add_class::<Frame>()?;
    m.add_class::<Integral>()?;
    m.add_class::<RxField>()?;
    m.add_class::<Tracker>()?;
    m.add_function(wrap_pyfunction!(render_frame, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(rx_scores, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_precision, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_shrink, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_flight, m)?)?;
    Ok(())
}
