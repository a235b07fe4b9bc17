//! Multi-object tracking over anomaly-mask sequences: blob detection,
//! constant-velocity Kalman filtering, gated optimal assignment and track
//! lifecycle management.

mod assign;
mod blob;
mod kalman;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use assign::{associate, hungarian, Assignment};
pub use blob::{detect_blobs, Blob};
pub use kalman::{kalman_predict, kalman_update, process_covariance, KalmanState};

use crate::raster::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub confirm_hits: u32,
    pub max_misses: u32,
    pub gate_px: f64,
    pub min_area: usize,
    /// Acceleration noise `q` (px²/frame⁴ scale).
    pub process_noise: f64,
    /// Centroid measurement variance (px²).
    pub measurement_noise: f64,
    /// Velocity variance of a newborn track (px²/frame²).
    pub initial_velocity_var: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            confirm_hits: 3,
            max_misses: 5,
            gate_px: 30.0,
            min_area: 4,
            process_noise: 0.05,
            measurement_noise: 4.0,
            initial_velocity_var: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

impl TrackStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Lost => "lost",
        }
    }
}

/// One frame of a track's history. Missed frames record the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: usize,
    pub position: [f64; 2],
    /// Area of the matched blob, zero on a miss.
    pub area: usize,
    pub matched: bool,
    pub status: TrackStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u32,
    pub kalman: KalmanState,
    pub status: TrackStatus,
    pub hits: u32,
    pub misses: u32,
    pub history: Vec<TrackPoint>,
}

impl Track {
    pub fn was_confirmed(&self) -> bool {
        self.history.iter().any(|p| p.status == TrackStatus::Confirmed)
    }

    pub fn first_frame(&self) -> usize {
        self.history.first().map_or(0, |p| p.frame)
    }

    pub fn last_frame(&self) -> usize {
        self.history.last().map_or(0, |p| p.frame)
    }

    pub fn at(&self, frame: usize) -> Option<&TrackPoint> {
        let first = self.first_frame();
        if frame < first {
            return None;
        }
        self.history.get(frame - first)
    }

    fn trim_trailing_misses(&mut self) {
        while self.history.last().is_some_and(|p| !p.matched) {
            self.history.pop();
        }
    }
}

/// Frame-by-frame multi-target tracker. Single owner, sequential.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    active: Vec<Track>,
    retired: Vec<Track>,
    next_id: u32,
    frame: usize,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self { params, active: Vec::new(), retired: Vec::new(), next_id: 1, frame: 0 }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    /// Processes one mask and returns the blobs that were detected in it.
    pub fn step_mask(&mut self, mask: &Mask) -> Vec<Blob> {
        let blobs = detect_blobs(mask, self.params.min_area);
        self.step(&blobs);
        blobs
    }

    /// Advances one frame with externally detected blobs.
    pub fn step(&mut self, blobs: &[Blob]) {
        let p = self.params;
        let frame = self.frame;
        for t in &mut self.active {
            t.kalman = t.kalman.predict(p.process_noise);
        }
        let predicted: Vec<[f64; 2]> = self.active.iter().map(|t| t.kalman.position()).collect();
        let centroids: Vec<[f64; 2]> = blobs.iter().map(|b| b.centroid).collect();
        let assignment = associate(&predicted, &centroids, p.gate_px);

        for &(ti, bi) in &assignment.matches {
            let t = &mut self.active[ti];
            let b = &blobs[bi];
            t.kalman = t.kalman.update(b.centroid, p.measurement_noise);
            t.hits += 1;
            t.misses = 0;
            if t.hits >= p.confirm_hits || t.status == TrackStatus::Lost {
                t.status = TrackStatus::Confirmed;
            }
            t.history.push(TrackPoint { frame, position: t.kalman.position(), area: b.area, matched: true, status: t.status });
        }
        for &ti in &assignment.unmatched_tracks {
            let t = &mut self.active[ti];
            t.misses += 1;
            if t.status == TrackStatus::Confirmed {
                t.status = TrackStatus::Lost;
            }
            t.history.push(TrackPoint { frame, position: t.kalman.position(), area: 0, matched: false, status: t.status });
        }

        let (keep, drop): (Vec<Track>, Vec<Track>) =
            std::mem::take(&mut self.active).into_iter().partition(|t| t.misses <= p.max_misses);
        self.active = keep;
        for mut t in drop {
            t.trim_trailing_misses();
            self.retired.push(t);
        }

        for &bi in &assignment.unmatched_blobs {
            let b = &blobs[bi];
            let status = if p.confirm_hits <= 1 { TrackStatus::Confirmed } else { TrackStatus::Tentative };
            let kalman = KalmanState::new(b.centroid, p.measurement_noise, p.initial_velocity_var);
            self.active.push(Track {
                id: self.next_id,
                kalman,
                status,
                hits: 1,
                misses: 0,
                history: vec![TrackPoint { frame, position: b.centroid, area: b.area, matched: true, status }],
            });
            self.next_id += 1;
        }
        self.frame += 1;
    }

    /// All tracks seen so far, ordered by id, with trailing misses removed.
    pub fn finish(mut self) -> Vec<Track> {
        for mut t in self.active.drain(..) {
            t.trim_trailing_misses();
            self.retired.push(t);
        }
        self.retired.sort_by_key(|t| t.id);
        self.retired
    }
}

/// Runs the tracker over a mask sequence.
pub fn track_sequence(masks: &[Mask], params: &TrackerParams) -> Vec<Track> {
    let mut tracker = Tracker::new(*params);
    for m in masks {
        tracker.step_mask(m);
    }
    tracker.finish()
}

/// Writes `frame,track_id,x,y,area,status` rows for every matched
/// observation made while a track was confirmed, ordered by frame then id.
pub fn write_tracks_csv(tracks: &[Track], w: impl Write) -> csv::Result<()> {
    let mut rows: Vec<(usize, u32, &TrackPoint)> = tracks
        .iter()
        .flat_map(|t| {
            t.history.iter().filter(|p| p.matched && p.status == TrackStatus::Confirmed).map(move |p| (p.frame, t.id, p))
        })
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame", "track_id", "x", "y", "area", "status"])?;
    for (frame, id, p) in rows {
        out.write_record([
            frame.to_string(),
            id.to_string(),
            format!("{:.3}", p.position[0]),
            format!("{:.3}", p.position[1]),
            p.area.to_string(),
            p.status.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(w: usize, h: usize, centers: &[[f64; 2]], r: f64) -> Mask {
        let mut m = Mask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if centers.iter().any(|c| (px - c[0]).powi(2) + (py - c[1]).powi(2) <= r * r) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[test]
    fn static_blob_gives_one_confirmed_track() {
        let masks: Vec<Mask> = (0..30).map(|_| disk_mask(64, 64, &[[30.0, 30.0]], 4.0)).collect();
        let tracks = track_sequence(&masks, &TrackerParams::default());
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].id, 1);
        assert_eq!(tracks[0].status, TrackStatus::Confirmed);
        assert_eq!(tracks[0].history.len(), 30);
    }

    #[test]
    fn moving_blob_velocity_converges() {
        let params = TrackerParams { gate_px: 10.0, ..Default::default() };
        let mut tracker = Tracker::new(params);
        for k in 0..16 {
            tracker.step_mask(&disk_mask(128, 32, &[[10.0 + 2.0 * k as f64, 16.0]], 3.0));
        }
        let t = &tracker.active()[0];
        assert_eq!(tracker.active().len(), 1);
        assert!((t.kalman.velocity()[0] - 2.0).abs() < 0.1, "{:?}", t.kalman.velocity());
        assert!(t.kalman.velocity()[1].abs() < 0.1);
    }

    #[test]
    fn lost_tracks_are_retired_and_ids_not_reused() {
        let params = TrackerParams::default();
        let mut masks: Vec<Mask> = (0..5).map(|_| disk_mask(64, 64, &[[20.0, 20.0]], 3.0)).collect();
        masks.extend((0..8).map(|_| Mask::new(64, 64)));
        masks.extend((0..4).map(|_| disk_mask(64, 64, &[[20.0, 20.0]], 3.0)));
        let tracks = track_sequence(&masks, &params);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].id, 1);
        assert_eq!(tracks[1].id, 2);
        assert_eq!(tracks[0].last_frame(), 4);
        assert_eq!(tracks[1].first_frame(), 13);
    }

    #[test]
    fn short_gap_keeps_identity() {
        let mut masks: Vec<Mask> = (0..5).map(|_| disk_mask(64, 64, &[[20.0, 20.0]], 3.0)).collect();
        masks.extend((0..3).map(|_| Mask::new(64, 64)));
        masks.extend((0..4).map(|_| disk_mask(64, 64, &[[20.0, 20.0]], 3.0)));
        let tracks = track_sequence(&masks, &TrackerParams::default());
        assert_eq!(tracks.len(), 1);
        let t = &tracks[0];
        // contiguous history through the gap
        for (i, p) in t.history.iter().enumerate() {
            assert_eq!(p.frame, i);
        }
        assert_eq!(t.history[6].status, TrackStatus::Lost);
        assert_eq!(t.history[8].status, TrackStatus::Confirmed);
    }

    #[test]
    fn csv_has_header_only_for_no_tracks() {
        let mut buf = Vec::new();
        write_tracks_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,track_id,x,y,area,status\n");
    }

    #[test]
    fn csv_lists_confirmed_observations() {
        let masks: Vec<Mask> = (0..4).map(|_| disk_mask(32, 32, &[[10.0, 10.0]], 2.0)).collect();
        let tracks = track_sequence(&masks, &TrackerParams::default());
        let mut buf = Vec::new();
        write_tracks_csv(&tracks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2,1,"));
        assert!(lines[1].ends_with(",confirmed"));
    }
}
