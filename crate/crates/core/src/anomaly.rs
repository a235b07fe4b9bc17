//! Reed–Xiaoli (RX) color anomaly detection.
//!
//! Background statistics are global: one mean and one covariance per image.
//! Scores are Mahalanobis distances to that background. Masks keep the
//! pixels whose score lies strictly above an empirical quantile of all valid
//! scores.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelRaster, Mask, RasterImage};

/// Ridge added to the covariance diagonal before inversion.
pub const DEFAULT_EPSILON: f64 = 1e-8;

// Fixed chunking keeps reductions independent of the worker count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundStats {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub sample_count: usize,
}

/// Mean and population (1/N) covariance over the valid pixels.
pub fn background_stats(image: &RasterImage, valid: Option<&Mask>) -> Result<BackgroundStats> {
    if let Some(m) = valid {
        image.check_same_size(m.width(), m.height())?;
    }
    let px = image.pixels();
    let is_valid = |i: usize| valid.is_none_or(|m| m.as_slice()[i]);

    let partial_sums: Vec<(Vector3<f64>, usize)> = px
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut s = Vector3::zeros();
            let mut n = 0;
            for (j, p) in chunk.iter().enumerate() {
                if is_valid(ci * CHUNK + j) {
                    s += Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
                    n += 1;
                }
            }
            (s, n)
        })
        .collect();
    let n: usize = partial_sums.iter().map(|p| p.1).sum();
    if n < 4 {
        return Err(Error::TooFewSamples(n));
    }
    let sums: Vec<Vector3<f64>> = partial_sums.into_iter().map(|p| p.0).collect();
    let mean = pairwise_sum(&sums, Vector3::zeros()) / n as f64;

    let partial_cov: Vec<Matrix3<f64>> = px
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut s = Matrix3::zeros();
            for (j, p) in chunk.iter().enumerate() {
                if is_valid(ci * CHUNK + j) {
                    let d = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) - mean;
                    s += d * d.transpose();
                }
            }
            s
        })
        .collect();
    let mut covariance = pairwise_sum(&partial_cov, Matrix3::zeros()) / n as f64;
    covariance = (covariance + covariance.transpose()) * 0.5;
    Ok(BackgroundStats { mean, covariance, sample_count: n })
}

fn pairwise_sum<T: Copy + std::ops::Add<Output = T>>(xs: &[T], zero: T) -> T {
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a, zero) + pairwise_sum(b, zero)
        }
    }
}

/// Per-pixel RX scores. Invalid pixels carry a score of zero and are
/// ignored by every consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct RxField {
    width: usize,
    height: usize,
    scores: Vec<f64>,
    valid: Mask,
}

impl RxField {
    pub fn new(width: usize, height: usize, scores: Vec<f64>, valid: Mask) -> Result<Self> {
        if scores.len() != width * height {
            return Err(Error::RasterMismatch(width, height, scores.len(), 1));
        }
        if valid.width() != width || valid.height() != height {
            return Err(Error::RasterMismatch(width, height, valid.width(), valid.height()));
        }
        Ok(Self { width, height, scores, valid })
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
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    #[inline]
    pub fn score(&self, x: usize, y: usize) -> f64 {
        self.scores[y * self.width + x]
    }

    pub fn valid_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().zip(self.valid.as_slice()).filter(|(_, &v)| v).map(|(&s, _)| s)
    }

    fn sorted_valid_scores(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.valid_scores().collect();
        s.sort_unstable_by(f64::total_cmp);
        s
    }

    /// Writes the scores as a little-endian f32 raster behind an 8-byte
    /// `(width, height)` u32 header. Invalid pixels are stored as NaN.
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.scores.len() * 4);
        for (s, &v) in self.scores.iter().zip(self.valid.as_slice()) {
            let x = if v { *s as f32 } else { f32::NAN };
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_binary(mut r: impl Read) -> std::io::Result<Self> {
        let mut hdr = [0u8; 8];
        r.read_exact(&mut hdr)?;
        let width = u32::from_le_bytes(hdr[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(hdr[4..8].try_into().unwrap()) as usize;
        let mut buf = vec![0u8; width * height * 4];
        r.read_exact(&mut buf)?;
        let mut scores = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for c in buf.chunks_exact(4) {
            let x = f32::from_le_bytes(c.try_into().unwrap());
            valid.push(!x.is_nan());
            scores.push(if x.is_nan() { 0.0 } else { x as f64 });
        }
        Ok(Self { width, height, scores, valid: Mask::from_vec(width, height, valid).unwrap() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(f)).map_err(|e| Error::io(path, e))
    }
}

/// RX scores with the default ridge.
pub fn rx_scores(image: &RasterImage, stats: &BackgroundStats, valid: Option<&Mask>) -> Result<RxField> {
    rx_scores_regularized(image, stats, valid, DEFAULT_EPSILON)
}

/// `(r − δ)ᵀ (K + εI)⁻¹ (r − δ)` for every valid pixel.
pub fn rx_scores_regularized(
    image: &RasterImage,
    stats: &BackgroundStats,
    valid: Option<&Mask>,
    epsilon: f64,
) -> Result<RxField> {
    let (w, h) = (image.width(), image.height());
    let valid = match valid {
        Some(m) => {
            image.check_same_size(m.width(), m.height())?;
            m.clone()
        }
        None => Mask::full(w, h),
    };
    let inv = (stats.covariance + Matrix3::identity() * epsilon)
        .try_inverse()
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or(Error::SingularCovariance)?;
    let inv = (inv + inv.transpose()) * 0.5;
    let mean = stats.mean;
    let mut scores = vec![0.0; w * h];
    scores.par_chunks_mut(CHUNK).zip(image.pixels().par_chunks(CHUNK)).zip(valid.as_slice().par_chunks(CHUNK)).for_each(
        |((out, px), ok)| {
            for ((s, p), &v) in out.iter_mut().zip(px).zip(ok) {
                if v {
                    let d = Vector3::new(p[0] as f64 - mean.x, p[1] as f64 - mean.y, p[2] as f64 - mean.z);
                    *s = d.dot(&(inv * d)).max(0.0);
                }
            }
        },
    );
    RxField::new(w, h, scores, valid)
}

/// Thresholded RX field.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMask {
    pub mask: Mask,
    pub threshold_used: f64,
    pub confidence_used: f64,
}

/// Linear-interpolated empirical quantile of sorted values.
fn quantile_sorted(sorted: &[f64], confidence: f64) -> f64 {
    if confidence <= 0.0 {
        // strictly below the minimum so that every valid pixel passes
        return sorted[0].next_down();
    }
    let pos = confidence * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn check_confidence(confidence: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::InvalidConfidence(confidence));
    }
    Ok(())
}

pub fn mask_above(field: &RxField, threshold: f64) -> Mask {
    let data = field.scores.iter().zip(field.valid.as_slice()).map(|(&s, &v)| v && s > threshold).collect();
    Mask::from_vec(field.width, field.height, data).unwrap()
}

/// Masks the valid pixels scoring strictly above the `confidence` quantile
/// of the valid scores.
pub fn threshold_by_confidence(field: &RxField, confidence: f64) -> Result<AnomalyMask> {
    check_confidence(confidence)?;
    let sorted = field.sorted_valid_scores();
    if sorted.is_empty() {
        return Ok(AnomalyMask {
            mask: Mask::new(field.width, field.height),
            threshold_used: f64::INFINITY,
            confidence_used: confidence,
        });
    }
    let threshold = quantile_sorted(&sorted, confidence);
    Ok(AnomalyMask { mask: mask_above(field, threshold), threshold_used: threshold, confidence_used: confidence })
}

/// Candidate confidences searched by [`optimize_threshold`]: 0.900 to 0.999
/// in steps of 0.001, then 0.9991 to 0.9999 and 0.99991 to 0.99999.
pub fn confidence_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (900..=999).map(|k| k as f64 / 1000.0).collect();
    g.extend((9991..=9999).map(|k| k as f64 / 10_000.0));
    g.extend((99_991..=99_999).map(|k| k as f64 / 100_000.0));
    g
}

/// Pixel precision of a mask: `100·TP/(TP+FP)`, undefined for empty masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Percent(f64),
    NoDetections,
}

impl Precision {
    pub fn from_counts(tp: usize, fp: usize) -> Self {
        if tp + fp == 0 {
            Precision::NoDetections
        } else {
            Precision::Percent(100.0 * tp as f64 / (tp + fp) as f64)
        }
    }

    pub fn percent(&self) -> Option<f64> {
        match *self {
            Precision::Percent(p) => Some(p),
            Precision::NoDetections => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdChoice {
    pub confidence: f64,
    pub mask: AnomalyMask,
    pub precision: Precision,
    pub targets_covered: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// Supervised confidence search over [`confidence_grid`].
///
/// Prefers candidates whose mask hits every target with at least one pixel
/// and, among those, the highest pixel precision. When no candidate covers
/// all targets the most targets win, then precision. Remaining ties go to
/// more true-positive pixels, then to the earlier grid entry.
pub fn optimize_threshold(field: &RxField, truth: &LabelRaster) -> Result<ThresholdChoice> {
    if truth.width() != field.width || truth.height() != field.height {
        return Err(Error::RasterMismatch(field.width, field.height, truth.width(), truth.height()));
    }
    let targets = truth.num_labels();
    if targets == 0 {
        return Err(Error::EmptyTruth);
    }

    // Valid pixels ranked by descending score; a mask "score > t" is then a
    // prefix of this ranking.
    let mut ranked: Vec<(f64, u8)> = field
        .scores
        .iter()
        .zip(field.valid.as_slice())
        .zip(truth.as_slice())
        .filter(|((_, &v), _)| v)
        .map(|((&s, _), &l)| (s, l))
        .collect();
    if ranked.is_empty() {
        return Err(Error::TooFewSamples(0));
    }
    ranked.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let ascending: Vec<f64> = ranked.iter().rev().map(|r| r.0).collect();

    let mut tp_prefix = Vec::with_capacity(ranked.len() + 1);
    tp_prefix.push(0usize);
    let mut first_hit = vec![usize::MAX; targets + 1];
    for (rank, &(_, l)) in ranked.iter().enumerate() {
        let tp = tp_prefix[rank] + usize::from(l != 0);
        tp_prefix.push(tp);
        if l != 0 && first_hit[l as usize] == usize::MAX {
            first_hit[l as usize] = rank;
        }
    }

    let mut best: Option<(f64, usize, usize, f64)> = None; // (confidence, n, covered, precision)
    for c in confidence_grid() {
        let threshold = quantile_sorted(&ascending, c);
        let n = ranked.partition_point(|r| r.0 > threshold);
        let tp = tp_prefix[n];
        let covered = first_hit[1..].iter().filter(|&&r| r < n).count();
        let precision = match Precision::from_counts(tp, n - tp) {
            Precision::Percent(p) => p,
            Precision::NoDetections => -1.0,
        };
        let better = match best {
            None => true,
            Some((_, bn, bcov, bprec)) => (covered, precision, tp) > (bcov, bprec, tp_prefix[bn]),
        };
        if better {
            best = Some((c, n, covered, precision));
        }
    }
    let (confidence, n, covered, _) = best.expect("grid is non-empty");
    let mask = threshold_by_confidence(field, confidence)?;
    let tp = tp_prefix[n];
    Ok(ThresholdChoice {
        confidence,
        precision: Precision::from_counts(tp, n - tp),
        mask,
        targets_covered: covered,
        true_positives: tp,
        false_positives: n - tp,
    })
}
