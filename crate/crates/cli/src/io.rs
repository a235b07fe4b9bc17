use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use aos_core::dataset::Dataset;
use aos_core::integrator::{integrate, FrameSet, IntegralImage};
use serde::Serialize;

use crate::Global;

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct ResolvedConfig<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    args: &'a T,
}

/// Writes the resolved command configuration as `config.json` in `dir`.
pub fn write_config<T: Serialize>(dir: &Path, g: &Global, command: &str, args: &T) -> Result<()> {
    create_dir(dir)?;
    let cfg = ResolvedConfig { command, version: env!("CARGO_PKG_VERSION"), seed: g.seed, args };
    let mut text = serde_json::to_string_pretty(&cfg)?;
    text.push('\n');
    let path = dir.join("config.json");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn open_dataset(path: &Path) -> Result<Dataset> {
    Dataset::open(path).with_context(|| format!("opening dataset {}", path.display()))
}

/// Frame set and its integral, quantized to 8 bits as `integrate` stores it.
/// Integrals are read from `integrals` when given.
pub fn load_set(ds: &Dataset, frame: usize, integrals: Option<&Path>) -> Result<(FrameSet, IntegralImage)> {
    let set = ds.load_frameset(frame)?;
    let integral = match integrals {
        Some(dir) => IntegralImage::load(dir, frame, ds.reference())?,
        None => {
            let mut i = integrate(&set, ds.focal_plane())?;
            i.raster = i.raster.quantized();
            i
        }
    };
    Ok((set, integral))
}

/// Files in `dir` named `<prefix><digits>.png`, sorted by name.
pub fn numbered_pngs(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = e?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let digits = name.strip_prefix(prefix).and_then(|n| n.strip_suffix(".png"));
        if digits.is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
