//! Evaluation protocol: pixel precision, the one-pixel target recall rule,
//! per-set precision tables for raw versus integral images, and covariance
//! ellipse comparison.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::anomaly::{background_stats, optimize_threshold, rx_scores, Precision, ThresholdChoice};
use crate::error::{Error, Result};
use crate::integrator::{FrameSet, IntegralImage};
use crate::raster::{LabelRaster, Mask};
use crate::simulator::GroundTruth;
use crate::tracker::{Track, TrackPoint, TrackStatus};

/// Floor applied to integral coefficients in shrink factors.
pub const SHRINK_EPSILON: f64 = 1e-12;

fn check_aligned(mask: &Mask, truth: &LabelRaster) -> Result<()> {
    if mask.width() != truth.width() || mask.height() != truth.height() {
        return Err(Error::RasterMismatch(mask.width(), mask.height(), truth.width(), truth.height()));
    }
    Ok(())
}

/// `100·TP/(TP+FP)` over mask pixels, with target pixels as positives.
pub fn pixel_precision(mask: &Mask, truth: &LabelRaster) -> Result<Precision> {
    check_aligned(mask, truth)?;
    let (mut tp, mut fp) = (0, 0);
    for (&m, &l) in mask.as_slice().iter().zip(truth.as_slice()) {
        if m {
            if l > 0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(Precision::from_counts(tp, fp))
}

/// Per target, in label order: does at least one mask pixel fall on it?
pub fn target_recall(mask: &Mask, truth: &LabelRaster) -> Result<Vec<bool>> {
    check_aligned(mask, truth)?;
    let mut hit = vec![false; truth.num_labels()];
    for (&m, &l) in mask.as_slice().iter().zip(truth.as_slice()) {
        if m && l > 0 {
            hit[l as usize - 1] = true;
        }
    }
    Ok(hit)
}

/// Mean of the defined precisions; `None` when every entry is undefined.
pub fn mean_precision(values: &[Precision]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().filter_map(Precision::percent).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// One row of the raw-versus-integral precision table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub set_id: String,
    /// Free-form condition tag, e.g. the occlusion density.
    pub tag: String,
    /// Optimized precision of each raw camera image, in camera order.
    pub ps: Vec<Precision>,
    /// Mean of the defined entries of `ps`.
    pub pas: Option<f64>,
    pub pi: Precision,
    /// Confidence chosen for each raw image.
    pub raw_confidences: Vec<f64>,
    /// Average of `raw_confidences`.
    pub ccs: f64,
    pub cci: f64,
    pub raw_targets_covered: Vec<usize>,
    pub integral_targets_covered: usize,
    pub num_targets: usize,
}

/// Runs the supervised threshold search on every raw image (against its
/// occlusion-free labels) and on the integral (against the focal-plane
/// labels).
pub fn evaluate_set(frames: &FrameSet, integral: &IntegralImage, truth: &GroundTruth) -> Result<PrecisionReport> {
    let (raw, integ) = evaluate_choices(frames, integral, truth)?;
    Ok(report_from(format!("frame_{:04}", frames.frame_index()), String::new(), &raw, &integ, truth.num_targets()))
}

/// Threshold choices behind [`evaluate_set`]: one per raw image, then the
/// integral's.
pub fn evaluate_choices(
    frames: &FrameSet,
    integral: &IntegralImage,
    truth: &GroundTruth,
) -> Result<(Vec<ThresholdChoice>, ThresholdChoice)> {
    if truth.camera_labels.len() != frames.len() {
        return Err(Error::LengthMismatch { expected: frames.len(), found: truth.camera_labels.len() });
    }
    let raw = frames
        .images()
        .iter()
        .zip(&truth.camera_labels)
        .map(|(img, labels)| {
            let stats = background_stats(img, None)?;
            let field = rx_scores(img, &stats, None)?;
            optimize_threshold(&field, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let integ = integral_choice(integral, &truth.labels)?;
    Ok((raw, integ))
}

/// Supervised threshold search on an integral image, statistics taken over
/// its valid pixels.
pub fn integral_choice(integral: &IntegralImage, labels: &LabelRaster) -> Result<ThresholdChoice> {
    let valid = integral.valid_mask();
    let stats = background_stats(&integral.raster, Some(&valid))?;
    let field = rx_scores(&integral.raster, &stats, Some(&valid))?;
    optimize_threshold(&field, labels)
}

pub fn report_from(
    set_id: String,
    tag: String,
    raw: &[ThresholdChoice],
    integral: &ThresholdChoice,
    num_targets: usize,
) -> PrecisionReport {
    let ps: Vec<Precision> = raw.iter().map(|c| c.precision).collect();
    let raw_confidences: Vec<f64> = raw.iter().map(|c| c.confidence).collect();
    let ccs = if raw.is_empty() { 0.0 } else { raw_confidences.iter().sum::<f64>() / raw.len() as f64 };
    PrecisionReport {
        set_id,
        tag,
        pas: mean_precision(&ps),
        ps,
        pi: integral.precision,
        raw_confidences,
        ccs,
        cci: integral.confidence,
        raw_targets_covered: raw.iter().map(|c| c.targets_covered).collect(),
        integral_targets_covered: integral.targets_covered,
        num_targets,
    }
}

/// Rows plus the column averages of `PAs` and `Pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub rows: Vec<PrecisionReport>,
    pub mean_pas: Option<f64>,
    pub mean_pi: Option<f64>,
}

impl EvaluationTable {
    pub fn new(rows: Vec<PrecisionReport>) -> Self {
        let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let mean_pas = mean(rows.iter().filter_map(|r| r.pas).collect());
        let mean_pi = mean(rows.iter().filter_map(|r| r.pi.percent()).collect());
        Self { rows, mean_pas, mean_pi }
    }

    /// Aligned plain-text table: set, tag, one column per camera, PAs, Pi.
    pub fn render(&self) -> String {
        let cams = self.rows.iter().map(|r| r.ps.len()).max().unwrap_or(0);
        let cell = |p: Option<f64>| p.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        let mut out = format!("{:<16} {:<10}", "set", "tag");
        for k in 0..cams {
            out.push_str(&format!(" {:>6}", format!("C{k}")));
        }
        out.push_str(&format!(" {:>6} {:>6}\n", "PAs", "Pi"));
        for r in &self.rows {
            out.push_str(&format!("{:<16} {:<10}", r.set_id, r.tag));
            for k in 0..cams {
                out.push_str(&format!(" {:>6}", cell(r.ps.get(k).and_then(Precision::percent))));
            }
            out.push_str(&format!(" {:>6} {:>6}\n", cell(r.pas), cell(r.pi.percent())));
        }
        out.push_str(&format!("{:<16} {:<10}", "average", ""));
        for _ in 0..cams {
            out.push_str(&format!(" {:>6}", ""));
        }
        out.push_str(&format!(" {:>6} {:>6}\n", cell(self.mean_pas), cell(self.mean_pi)));
        out
    }
}

/// Eigenpairs of a symmetric 3×3 matrix, eigenvalues descending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEigen3 {
    pub eigenvalues: [f64; 3],
    /// Unit eigenvectors, `eigenvectors[i]` belonging to `eigenvalues[i]`.
    pub eigenvectors: [[f64; 3]; 3],
}

impl SymmetricEigen3 {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        (0..3).fold(Matrix3::zeros(), |acc, i| {
            let v = Vector3::from(self.eigenvectors[i]);
            acc + v * v.transpose() * self.eigenvalues[i]
        })
    }

    /// Semi-axes of the 2σ ellipsoid: `2·sqrt(λ)` per eigenvalue.
    pub fn two_sigma_axes(&self) -> [f64; 3] {
        self.eigenvalues.map(|l| 2.0 * l.max(0.0).sqrt())
    }
}

fn any_unit_orthogonal(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if w.x.abs() > w.y.abs() {
        Vector3::new(-w.z, 0.0, w.x) / (w.x * w.x + w.z * w.z).sqrt()
    } else {
        Vector3::new(0.0, w.z, -w.y) / (w.y * w.y + w.z * w.z).sqrt()
    };
    (u, w.cross(&u))
}

/// Eigenvector of an isolated eigenvalue: the longest cross product of two
/// rows of `A - λI`.
fn isolated_eigenvector(a: &Matrix3<f64>, lambda: f64) -> Vector3<f64> {
    let m = a - Matrix3::identity() * lambda;
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let candidates = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    let best = candidates.iter().max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared())).unwrap();
    let n = best.norm();
    if n > 0.0 {
        best / n
    } else {
        Vector3::x()
    }
}

/// Eigenvector for `lambda` inside the plane orthogonal to `v0`.
fn complement_eigenvector(a: &Matrix3<f64>, v0: &Vector3<f64>, lambda: f64) -> Vector3<f64> {
    let (u, v) = any_unit_orthogonal(v0);
    let au = a * u;
    let av = a * v;
    let m00 = u.dot(&au) - lambda;
    let m01 = u.dot(&av);
    let m11 = v.dot(&av) - lambda;
    // null vector of [[m00, m01], [m01, m11]] from its larger row
    let w = if m00.abs() >= m11.abs() { u * -m01 + v * m00 } else { u * m11 + v * -m01 };
    let n = w.norm();
    if n > 0.0 {
        w / n
    } else {
        u
    }
}

/// Closed-form (trigonometric) eigendecomposition of a symmetric 3×3 matrix.
pub fn symmetric_eigen3(k: &Matrix3<f64>) -> SymmetricEigen3 {
    let a = (k + k.transpose()) * 0.5;
    let scale = a.abs().max();
    if scale == 0.0 {
        return SymmetricEigen3 { eigenvalues: [0.0; 3], eigenvectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    }
    // work on a unit-scale copy
    let a = a / scale;
    let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let (values, vectors) = if off == 0.0 {
        let mut pairs: Vec<(f64, Vector3<f64>)> = (0..3)
            .map(|i| {
                let mut e = Vector3::zeros();
                e[i] = 1.0;
                (a[(i, i)], e)
            })
            .collect();
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
        ([pairs[0].0, pairs[1].0, pairs[2].0], [pairs[0].1, pairs[1].1, pairs[2].1])
    } else {
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        let b = (a - Matrix3::identity() * q) / p;
        let half_det = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = half_det.acos() / 3.0;
        let l0 = q + 2.0 * p * phi.cos();
        let l2 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let l1 = 3.0 * q - l0 - l2;
        // start from the eigenvalue farthest from the other two
        if half_det >= 0.0 {
            let v0 = isolated_eigenvector(&a, l0);
            let v1 = complement_eigenvector(&a, &v0, l1);
            let v2 = v0.cross(&v1);
            ([l0, l1, l2], [v0, v1, v2])
        } else {
            let v2 = isolated_eigenvector(&a, l2);
            let v1 = complement_eigenvector(&a, &v2, l1);
            let v0 = v1.cross(&v2);
            ([l0, l1, l2], [v0, v1, v2])
        }
    };
    SymmetricEigen3 { eigenvalues: values.map(|l| l * scale), eigenvectors: vectors.map(|v| [v.x, v.y, v.z]) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    /// Coefficient-wise mean of the raw images' covariance matrices.
    pub raw_mean_k: Matrix3<f64>,
    pub integral_k: Matrix3<f64>,
    pub raw_eigen: SymmetricEigen3,
    pub integral_eigen: SymmetricEigen3,
    pub raw_axes: [f64; 3],
    pub integral_axes: [f64; 3],
    /// `|raw| / max(|integral|, 1e-12)` per coefficient.
    pub shrink_factors: Matrix3<f64>,
}

impl CovarianceReport {
    pub fn mean_diagonal_shrink(&self) -> f64 {
        (0..3).map(|i| self.shrink_factors[(i, i)]).sum::<f64>() / 3.0
    }
}

pub fn covariance_report(frames: &FrameSet, integral: &IntegralImage) -> Result<CovarianceReport> {
    if frames.is_empty() {
        return Err(Error::InvalidFrameSet("no images".into()));
    }
    let mut raw = Matrix3::zeros();
    for img in frames.images() {
        raw += background_stats(img, None)?.covariance;
    }
    raw /= frames.len() as f64;
    let valid = integral.valid_mask();
    let integ = background_stats(&integral.raster, Some(&valid))?.covariance;
    Ok(covariance_from(raw, integ))
}

pub fn covariance_from(raw_mean_k: Matrix3<f64>, integral_k: Matrix3<f64>) -> CovarianceReport {
    let raw_eigen = symmetric_eigen3(&raw_mean_k);
    let integral_eigen = symmetric_eigen3(&integral_k);
    CovarianceReport {
        raw_mean_k,
        integral_k,
        raw_axes: raw_eigen.two_sigma_axes(),
        integral_axes: integral_eigen.two_sigma_axes(),
        raw_eigen,
        integral_eigen,
        shrink_factors: raw_mean_k.zip_map(&integral_k, |r, i| r.abs() / i.abs().max(SHRINK_EPSILON)),
    }
}

/// Multi-target tracking quality against per-frame truth positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub frames: usize,
    /// Frames in which every target is covered by its stable track.
    pub good_frames: usize,
    pub confirmed_tracks: usize,
    /// Confirmed tracks whose confirmed observations mostly miss every target.
    pub spurious_tracks: usize,
    /// Changes of the nearest confirmed track id along each target's path.
    pub id_switches: usize,
}

impl TrackingReport {
    pub fn good_fraction(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.good_frames as f64 / self.frames as f64
        }
    }
}

/// Scores `tracks` against `truth[frame][target]` pixel positions.
///
/// A target's stable track is the id that covers it (a confirmed, matched
/// observation within `radius_px`) in the most frames, ties going to the
/// lower id. A frame is good when each target's stable track has a
/// non-tentative point within `radius_px` of it in that frame.
pub fn evaluate_tracks(tracks: &[Track], truth: &[Vec<[f64; 2]>], radius_px: f64) -> TrackingReport {
    let near = |p: [f64; 2], c: [f64; 2]| (p[0] - c[0]).hypot(p[1] - c[1]) <= radius_px;
    let covers = |p: &TrackPoint| p.matched && p.status == TrackStatus::Confirmed;
    let targets = truth.iter().map(Vec::len).max().unwrap_or(0);

    let mut votes: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); targets];
    for t in tracks {
        for p in t.history.iter().filter(|p| covers(p)) {
            for (k, c) in truth.get(p.frame).into_iter().flatten().enumerate() {
                if near(p.position, *c) {
                    *votes[k].entry(t.id).or_default() += 1;
                }
            }
        }
    }
    let stable: Vec<Option<&Track>> = votes
        .iter()
        .map(|v| {
            let best = v.iter().max_by_key(|(id, n)| (**n, std::cmp::Reverse(**id)))?;
            tracks.iter().find(|t| t.id == *best.0)
        })
        .collect();

    let good_frames = truth
        .iter()
        .enumerate()
        .filter(|(f, pts)| {
            pts.iter().zip(&stable).all(|(c, t)| {
                t.and_then(|t| t.at(*f)).is_some_and(|p| p.status != TrackStatus::Tentative && near(p.position, *c))
            })
        })
        .count();

    let mut id_switches = 0;
    for k in 0..targets {
        let mut last = None;
        for (f, pts) in truth.iter().enumerate() {
            let Some(c) = pts.get(k) else { continue };
            let nearest = tracks
                .iter()
                .filter_map(|t| t.at(f).filter(|p| covers(p) && near(p.position, *c)).map(|p| (t.id, p)))
                .min_by(|a, b| {
                    let d = |p: &TrackPoint| (p.position[0] - c[0]).hypot(p.position[1] - c[1]);
                    d(a.1).total_cmp(&d(b.1)).then(a.0.cmp(&b.0))
                })
                .map(|(id, _)| id);
            if let Some(id) = nearest {
                if last.is_some_and(|l| l != id) {
                    id_switches += 1;
                }
                last = Some(id);
            }
        }
    }

    let confirmed: Vec<&Track> = tracks.iter().filter(|t| t.was_confirmed()).collect();
    let spurious_tracks = confirmed
        .iter()
        .filter(|t| {
            let pts: Vec<&TrackPoint> = t.history.iter().filter(|p| covers(p)).collect();
            let hits = pts.iter().filter(|p| truth.get(p.frame).is_some_and(|c| c.iter().any(|c| near(p.position, *c)))).count();
            2 * hits < pts.len()
        })
        .count();

    TrackingReport { frames: truth.len(), good_frames, confirmed_tracks: confirmed.len(), spurious_tracks, id_switches }
}
