use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use aos_core::metrics::{covariance_report, evaluate_choices, report_from, EvaluationTable};
use clap::Args;
use serde::Serialize;

use crate::io::{load_set, open_dataset, write_config};
use crate::{config_error, Global};

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Simulated dataset directories; every frame is one set.
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    /// Evaluate at most this many frames per dataset.
    #[arg(long)]
    pub max_frames: Option<usize>,
}

#[derive(Serialize)]
struct ShrinkRow {
    set_id: String,
    mean_diagonal_shrink: f64,
}

#[derive(Serialize)]
struct ShrinkSummary {
    rows: Vec<ShrinkRow>,
    mean: f64,
}

pub fn run(g: &Global, args: &EvaluateArgs) -> Result<()> {
    if args.max_frames == Some(0) {
        return Err(config_error("--max-frames must be positive"));
    }
    let datasets = args.datasets.iter().map(|p| open_dataset(p)).collect::<Result<Vec<_>>>()?;
    write_config(&g.out, g, "evaluate", args)?;
    let mut rows = Vec::new();
    let mut shrink = Vec::new();
    for (path, ds) in args.datasets.iter().zip(&datasets) {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let tag = ds.manifest().scene.as_ref().map_or_else(String::new, |s| format!("D={}", s.occluder_density));
        for n in 0..ds.frames().min(args.max_frames.unwrap_or(usize::MAX)) {
            let truth = ds.load_truth(n)?.ok_or_else(|| anyhow!("no ground truth at {}", ds.truth_path(n).display()))?;
            let (set, integral) = load_set(ds, n, None)?;
            let (raw, integ) = evaluate_choices(&set, &integral, &truth)?;
            let set_id = format!("{name}/{n:04}");
            rows.push(report_from(set_id.clone(), tag.clone(), &raw, &integ, truth.num_targets()));
            shrink.push(ShrinkRow { set_id, mean_diagonal_shrink: covariance_report(&set, &integral)?.mean_diagonal_shrink() });
        }
    }
    let table = EvaluationTable::new(rows);
    let rendered = table.render();
    print!("{rendered}");
    let mean = shrink.iter().map(|r| r.mean_diagonal_shrink).sum::<f64>() / shrink.len().max(1) as f64;
    println!("mean covariance shrink (raw/integral): {mean:.3}");

    fs::write(g.out.join("report.txt"), &rendered)?;
    let mut json = serde_json::to_string_pretty(&table)?;
    json.push('\n');
    fs::write(g.out.join("report.json"), json)?;
    let mut json = serde_json::to_string_pretty(&ShrinkSummary { rows: shrink, mean })?;
    json.push('\n');
    fs::write(g.out.join("covariance.json"), json)?;
    Ok(())
}
