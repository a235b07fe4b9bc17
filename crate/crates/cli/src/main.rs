//! `aos`: simulate, integrate, detect, track and evaluate airborne
//! optical-sectioning datasets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod draw;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{detect, evaluate, integrate, simulate, track};

#[derive(Debug, Parser)]
#[command(name = "aos", version, about = "Airborne optical sectioning pipeline")]
struct Cli {
    /// Base random seed; recorded in every output directory.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a simulated flight (or a sweep of seeded flights) to disk.
    Simulate(simulate::SimulateArgs),
    /// Integrate every frame of a dataset onto its focal plane.
    Integrate(integrate::IntegrateArgs),
    /// RX anomaly masks and overlays for integrals (and raw images).
    Detect(detect::DetectArgs),
    /// Track blobs through a mask sequence.
    Track(track::TrackArgs),
    /// Raw versus integral precision table over one or more datasets.
    Evaluate(evaluate::EvaluateArgs),
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub out: PathBuf,
}

/// Bad flags or parameters: exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    let g = Global { seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Simulate(a) => simulate::run(&g, &a),
        Command::Integrate(a) => integrate::run(&g, &a),
        Command::Detect(a) => detect::run(&g, &a),
        Command::Track(a) => track::run(&g, &a),
        Command::Evaluate(a) => evaluate::run(&g, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
