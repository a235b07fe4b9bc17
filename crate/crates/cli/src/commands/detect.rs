use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use aos_core::anomaly::{background_stats, optimize_threshold, rx_scores, threshold_by_confidence, Precision, RxField};
use aos_core::metrics::pixel_precision;
use aos_core::raster::{LabelRaster, Mask, RasterImage};
use clap::Args;
use serde::Serialize;

use crate::draw::detection_overlay;
use crate::io::{create_dir, load_set, open_dataset, write_config};
use crate::{config_error, Global};

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
    /// Directory of stored integrals; integrates in memory when absent.
    #[arg(long)]
    pub integrals: Option<PathBuf>,
    /// Quantile of the RX scores used as threshold.
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    /// Pick the most precise confidence per image against ground truth.
    #[arg(long)]
    pub optimize: bool,
    /// Also detect on every raw camera image.
    #[arg(long)]
    pub raw: bool,
}

struct Detection {
    mask: Mask,
    confidence: f64,
    precision: Option<Precision>,
}

fn detect(field: &RxField, truth: Option<&LabelRaster>, args: &DetectArgs) -> Result<Detection> {
    if args.optimize {
        let truth = truth.expect("checked by caller");
        let c = optimize_threshold(field, truth)?;
        return Ok(Detection { mask: c.mask.mask, confidence: c.confidence, precision: Some(c.precision) });
    }
    let m = threshold_by_confidence(field, args.confidence)?;
    let precision = truth.map(|t| pixel_precision(&m.mask, t)).transpose()?;
    Ok(Detection { mask: m.mask, confidence: args.confidence, precision })
}

fn write_stream(dir: &Path, frame: usize, base: &RasterImage, d: &Detection, truth: Option<&LabelRaster>) -> Result<()> {
    d.mask.save_png(dir.join(format!("mask_{frame:04}.png")))?;
    detection_overlay(base, &d.mask, truth).save_png(dir.join(format!("overlay_{frame:04}.png")))?;
    Ok(())
}

fn precision_text(p: Option<Precision>) -> String {
    match p.map(|p| p.percent()) {
        Some(Some(v)) => v.to_string(),
        Some(None) => "undefined".into(),
        None => "-".into(),
    }
}

pub fn run(g: &Global, args: &DetectArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.confidence) {
        return Err(config_error(format!("--confidence {} outside [0, 1]", args.confidence)));
    }
    let ds = open_dataset(&args.dataset)?;
    write_config(&g.out, g, "detect", args)?;
    let integral_dir = g.out.join("integral");
    create_dir(&integral_dir)?;
    if args.raw {
        for k in 0..ds.views().len() {
            create_dir(&g.out.join(format!("cam{k}")))?;
        }
    }
    let mut csv = String::from("frame,stream,confidence,mask_pixels,precision\n");
    for n in 0..ds.frames() {
        let truth = ds.load_truth(n)?;
        if args.optimize && truth.is_none() {
            bail!("--optimize needs ground truth, none found at {}", ds.truth_path(n).display());
        }
        let (set, integral) = load_set(&ds, n, args.integrals.as_deref())?;
        let valid = integral.valid_mask();
        let stats = background_stats(&integral.raster, Some(&valid))?;
        let field = rx_scores(&integral.raster, &stats, Some(&valid))?;
        let labels = truth.as_ref().map(|t| &t.labels);
        let d = detect(&field, labels, args)?;
        write_stream(&integral_dir, n, &integral.raster, &d, labels)?;
        println!("frame {n:04} integral: confidence {} Pi {}", d.confidence, precision_text(d.precision));
        writeln!(csv, "{n},integral,{},{},{}", d.confidence, d.mask.count(), precision_text(d.precision))?;

        if args.raw {
            let cam_labels = truth.as_ref().map(|t| &t.camera_labels);
            if args.optimize && cam_labels.is_some_and(|l| l.len() != set.len()) {
                bail!("--optimize --raw needs per-camera truth under {}", ds.root().join("truth").display());
            }
            let mut ps = Vec::new();
            for (k, img) in set.images().iter().enumerate() {
                let labels = cam_labels.and_then(|l| l.get(k));
                let stats = background_stats(img, None)?;
                let field = rx_scores(img, &stats, None)?;
                let d = detect(&field, labels, args)?;
                write_stream(&g.out.join(format!("cam{k}")), n, img, &d, labels)?;
                writeln!(csv, "{n},cam{k},{},{},{}", d.confidence, d.mask.count(), precision_text(d.precision))?;
                ps.extend(d.precision);
                println!("frame {n:04} cam{k}: confidence {} Ps {}", d.confidence, precision_text(d.precision));
            }
            if let Some(pas) = aos_core::metrics::mean_precision(&ps) {
                println!("frame {n:04} PAs {pas}");
            }
        }
    }
    fs::write(g.out.join("detections.csv"), csv)?;
    Ok(())
}
