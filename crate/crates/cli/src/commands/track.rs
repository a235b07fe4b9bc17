use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aos_core::dataset::Dataset;
use aos_core::geometry::{ground_to_pixel, View};
use aos_core::metrics::{evaluate_tracks, TrackingReport};
use aos_core::raster::{Mask, RasterImage};
use aos_core::tracker::{write_tracks_csv, Track, TrackStatus, Tracker, TrackerParams};
use clap::Args;
use nalgebra::Vector3;
use serde::Serialize;

use crate::draw::{circle, label, track_color};
use crate::io::{create_dir, numbered_pngs, open_dataset, write_config};
use crate::{config_error, Global};

#[derive(Debug, Args, Serialize)]
pub struct TrackArgs {
    /// Directory of `mask_NNNN.png` files, or a `detect` output directory.
    pub masks: PathBuf,
    /// Dataset supplying ground-truth centroids for scoring.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Also track the per-camera mask streams of a `detect --raw` output.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value_t = TrackerParams::default().gate_px)]
    pub gate: f64,
    #[arg(long, default_value_t = TrackerParams::default().min_area)]
    pub min_area: usize,
    #[arg(long, default_value_t = TrackerParams::default().confirm_hits)]
    pub confirm_hits: u32,
    #[arg(long, default_value_t = TrackerParams::default().max_misses)]
    pub max_misses: u32,
    #[arg(long, default_value_t = TrackerParams::default().process_noise)]
    pub process_noise: f64,
    #[arg(long, default_value_t = TrackerParams::default().measurement_noise)]
    pub measurement_noise: f64,
    /// Scoring radius around each truth centroid (px); defaults to 1.5
    /// target radii.
    #[arg(long)]
    pub radius: Option<f64>,
}

impl TrackArgs {
    fn params(&self) -> Result<TrackerParams> {
        let p = TrackerParams {
            gate_px: self.gate,
            min_area: self.min_area,
            confirm_hits: self.confirm_hits,
            max_misses: self.max_misses,
            process_noise: self.process_noise,
            measurement_noise: self.measurement_noise,
            ..TrackerParams::default()
        };
        if !(p.gate_px > 0.0) || p.confirm_hits == 0 || !(p.process_noise >= 0.0) || !(p.measurement_noise > 0.0) {
            return Err(config_error("tracker parameters must be positive"));
        }
        Ok(p)
    }
}

struct Stream {
    name: String,
    input: PathBuf,
    output: PathBuf,
    /// Camera whose raster the masks live in; `None` for integrals.
    camera: Option<usize>,
}

fn streams(g: &Global, args: &TrackArgs) -> Result<Vec<Stream>> {
    let integral = args.masks.join("integral");
    let direct = !integral.is_dir();
    let mut out = vec![Stream {
        name: "integral".into(),
        input: if direct { args.masks.clone() } else { integral },
        output: g.out.clone(),
        camera: None,
    }];
    if args.raw {
        if direct {
            return Err(config_error("--raw needs a detect output directory with integral/ and cam<k>/"));
        }
        for k in 0.. {
            let dir = args.masks.join(format!("cam{k}"));
            if !dir.is_dir() {
                break;
            }
            out.push(Stream { name: format!("cam{k}"), input: dir, output: g.out.join(format!("cam{k}")), camera: Some(k) });
        }
    }
    Ok(out)
}

fn load_masks(dir: &Path) -> Result<Vec<Mask>> {
    let files = numbered_pngs(dir, "mask_")?;
    for (i, f) in files.iter().enumerate() {
        if f.file_name() != Some(format!("mask_{i:04}.png").as_ref()) {
            bail!("mask sequence has a gap before {}", f.display());
        }
    }
    files.iter().map(|f| Mask::load_png(f).map_err(Into::into)).collect()
}

/// Per-frame truth centroids in the stream's raster plus a scoring radius.
fn truth_positions(ds: &Dataset, view: &View, camera: Option<usize>, frames: usize) -> Result<(Vec<Vec<[f64; 2]>>, f64)> {
    let project = |x: f64, y: f64| ground_to_pixel(&Vector3::new(x, y, 0.0), &view.camera, &view.pose).map(|p| p.pixel);
    let mut truth = vec![Vec::new(); frames];
    for r in ds.centroids().iter().filter(|r| r.frame < frames) {
        let slot = &mut truth[r.frame];
        if slot.len() <= r.target_id {
            slot.resize(r.target_id + 1, [f64::NAN; 2]);
        }
        slot[r.target_id] = match camera {
            None => [r.px_x, r.px_y],
            Some(_) => project(r.world_x, r.world_y)?,
        };
    }
    let radius_m = ds.manifest().scene.as_ref().map_or(0.0, |s| s.targets.iter().map(|t| t.radius_m).fold(0.0, f64::max));
    let radius_px = match ds.centroids().first() {
        Some(r) if radius_m > 0.0 => {
            let a = project(r.world_x, r.world_y)?;
            let b = project(r.world_x + radius_m, r.world_y)?;
            1.5 * (b[0] - a[0]).hypot(b[1] - a[1])
        }
        _ => 0.0,
    };
    Ok((truth, radius_px))
}

fn annotate(mask: &Mask, tracks: &[Track], frame: usize) -> RasterImage {
    let mut img = RasterImage::from_fn(mask.width(), mask.height(), |x, y| if mask.get(x, y) { [0.4; 3] } else { [0.0; 3] });
    let scale = (mask.width() as i64 / 256).max(1);
    for t in tracks {
        let Some(p) = t.at(frame).filter(|p| p.status != TrackStatus::Tentative) else { continue };
        let r = if p.matched { (p.area as f64 / std::f64::consts::PI).sqrt() + 5.0 } else { 6.0 };
        let c = track_color(t.id);
        circle(&mut img, p.position, r, c);
        label(&mut img, (p.position[0] + r) as i64 + 2, (p.position[1] - r) as i64, &t.id.to_string(), scale, c);
    }
    img
}

pub fn run(g: &Global, args: &TrackArgs) -> Result<()> {
    let params = args.params()?;
    if !args.masks.is_dir() {
        bail!("mask directory {} not found", args.masks.display());
    }
    let ds = args.dataset.as_deref().map(open_dataset).transpose()?;
    write_config(&g.out, g, "track", args)?;
    for s in streams(g, args)? {
        let masks = load_masks(&s.input)?;
        create_dir(&s.output.join("annotated"))?;
        let mut tracker = Tracker::new(params);
        for m in &masks {
            tracker.step_mask(m);
        }
        let tracks = tracker.finish();
        let csv = s.output.join("tracks.csv");
        let file = File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
        write_tracks_csv(&tracks, BufWriter::new(file))?;
        for (n, m) in masks.iter().enumerate() {
            annotate(m, &tracks, n).save_png(s.output.join("annotated").join(format!("frame_{n:04}.png")))?;
        }
        let confirmed = tracks.iter().filter(|t| t.was_confirmed()).count();
        print!("{}: {} frames, {} tracks, {confirmed} confirmed", s.name, masks.len(), tracks.len());
        if let Some(ds) = &ds {
            let view = &ds.views()[s.camera.unwrap_or(ds.reference())];
            let (truth, default_radius) = truth_positions(ds, view, s.camera, masks.len())?;
            let radius = args.radius.unwrap_or(if default_radius > 0.0 { default_radius } else { params.gate_px });
            let r: TrackingReport = evaluate_tracks(&tracks, &truth, radius);
            print!(
                ", good frames {}/{} ({:.1}%), id switches {}, spurious {}",
                r.good_frames,
                r.frames,
                100.0 * r.good_fraction(),
                r.id_switches,
                r.spurious_tracks
            );
            let mut text = serde_json::to_string_pretty(&r)?;
            text.push('\n');
            std::fs::write(s.output.join("tracking.json"), text)?;
        }
        println!();
    }
    Ok(())
}
