use std::path::PathBuf;

use anyhow::{Context, Result};
use aos_core::dataset::{simulate_flight, RigFile};
use aos_core::simulator::{paper_rig, SceneSpec, DEFAULT_ALTITUDE_M};
use clap::Args;
use serde::Serialize;

use crate::io::write_config;
use crate::{config_error, Global};

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Canopy occlusion density D in [0, 1).
    #[arg(long, default_value_t = 0.85)]
    pub density: f64,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Square camera resolution of the built-in 10-camera rig.
    #[arg(long, default_value_t = 1024)]
    pub resolution: usize,
    #[arg(long, default_value_t = DEFAULT_ALTITUDE_M)]
    pub altitude: f64,
    /// Rig file replacing the built-in rig.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Forest without walking targets.
    #[arg(long)]
    pub no_targets: bool,
    /// Gaussian color noise sigma.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Write N datasets `set_000…` with seeds seed, seed+1, …
    #[arg(long)]
    pub sweep: Option<usize>,
}

fn spec(args: &SimulateArgs, seed: u64) -> SceneSpec {
    let mut s = if args.no_targets { SceneSpec::forest(seed, args.density) } else { SceneSpec::two_walkers(seed, args.density) };
    s.noise_sigma = args.noise;
    s
}

pub fn run(g: &Global, args: &SimulateArgs) -> Result<()> {
    spec(args, g.seed).validate().map_err(|e| config_error(e.to_string()))?;
    if args.frames == 0 {
        return Err(config_error("--frames must be positive"));
    }
    if !(args.fps > 0.0) {
        return Err(config_error("--fps must be positive"));
    }
    if args.sweep == Some(0) {
        return Err(config_error("--sweep must be positive"));
    }
    let rig = match &args.rig {
        Some(p) => {
            RigFile::load(p).and_then(|f| f.to_array_rig()).map_err(|e| config_error(format!("rig {}: {e}", p.display())))?
        }
        None => paper_rig(args.altitude, args.resolution).map_err(|e| config_error(e.to_string()))?,
    };

    let sets: Vec<(u64, PathBuf)> = match args.sweep {
        None => vec![(g.seed, g.out.clone())],
        Some(n) => (0..n).map(|i| (g.seed + i as u64, g.out.join(format!("set_{i:03}")))).collect(),
    };
    write_config(&g.out, g, "simulate", args)?;
    for (seed, dir) in &sets {
        let m = simulate_flight(&spec(args, *seed), &rig, args.frames, args.fps, dir)
            .with_context(|| format!("simulating into {}", dir.display()))?;
        if args.sweep.is_some() {
            write_config(dir, &Global { seed: *seed, out: dir.clone() }, "simulate", args)?;
        }
        println!(
            "{}: seed {seed}, {} cameras, aperture {:.2} m, {} frames, density {:.4}",
            dir.display(),
            m.rig.cameras.len(),
            m.aperture_m,
            m.frames,
            m.realized_density.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
