use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use aos_core::integrator::integrate;
use clap::Args;
use serde::Serialize;

use crate::io::{open_dataset, write_config};
use crate::Global;

#[derive(Debug, Args, Serialize)]
pub struct IntegrateArgs {
    /// Dataset directory.
    pub dataset: PathBuf,
}

pub fn run(g: &Global, args: &IntegrateArgs) -> Result<()> {
    let ds = open_dataset(&args.dataset)?;
    write_config(&g.out, g, "integrate", args)?;
    let mut total = 0.0;
    for n in 0..ds.frames() {
        let set = ds.load_frameset(n)?;
        let t0 = Instant::now();
        let integral = integrate(&set, ds.focal_plane())?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        total += ms;
        integral.save(&g.out, n).with_context(|| format!("writing frame {n}"))?;
        println!("frame {n:04}: {} views, {}x{}, {ms:.1} ms", set.len(), integral.width(), integral.height());
    }
    if ds.frames() > 0 {
        println!("integrated {} frames, mean {:.1} ms/frame", ds.frames(), total / ds.frames() as f64);
    }
    Ok(())
}
